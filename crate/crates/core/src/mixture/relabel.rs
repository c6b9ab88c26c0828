//! Ordering restriction at a reference time to undo label switching.

use std::cmp::Ordering;

use super::gibbs::GibbsTrace;
use super::ClusterParams;
use crate::dlm::{structural_sets, DlmSpec, StatePath};
use crate::error::{Error, Result};

/// Differences at or below this are ties and fall through to the next time.
const TIE_TOL: f64 = 1e-10;

/// Reference time (0-based) and observation coordinate used for ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relabel {
    pub t_ref: usize,
    pub coord: usize,
}

/// Groups of clusters whose labels are exchangeable: same `(F, G)` pair and
/// same evolution discount.
pub fn relabel_groups(specs: &[DlmSpec]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for set in structural_sets(specs) {
        let mut rest = set;
        while let Some(&first) = rest.first() {
            let d = specs[first].discount();
            let (same, other): (Vec<usize>, Vec<usize>) = rest.iter().partition(|&&j| specs[j].discount() == d);
            out.push(same);
            rest = other;
        }
    }
    out
}

fn key(spec: &DlmSpec, path: &StatePath, t: usize, coord: usize) -> f64 {
    (spec.obs_matrix().row(coord) * &path.theta[t])[0]
}

/// Permutation `perm` with `perm[new] = old`: inside every group, clusters
/// are sorted ascending by `(F θ_t)_coord` at `t_ref`.
pub fn relabel_order(specs: &[DlmSpec], paths: &[&StatePath], relabel: &Relabel) -> Result<Vec<usize>> {
    let k = specs.len();
    if paths.len() != k {
        return Err(Error::invalid("one path per cluster is required"));
    }
    let t_len = paths[0].len();
    if relabel.t_ref >= t_len {
        return Err(Error::invalid(format!("reference time {} outside 1..{t_len}", relabel.t_ref + 1)));
    }
    if specs.iter().any(|s| relabel.coord >= s.obs_dim()) {
        return Err(Error::invalid(format!("coordinate {} outside the observation space", relabel.coord + 1)));
    }
    let times: Vec<usize> = (relabel.t_ref..t_len).chain((0..relabel.t_ref).rev()).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    for group in relabel_groups(specs) {
        if group.len() < 2 {
            continue;
        }
        let mut sorted = group.clone();
        sorted.sort_by(|&a, &b| {
            for &t in &times {
                let d = key(&specs[a], paths[a], t, relabel.coord) - key(&specs[b], paths[b], t, relabel.coord);
                if d.abs() > TIE_TOL {
                    return d.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
                }
            }
            a.cmp(&b)
        });
        for (slot, old) in group.iter().zip(sorted) {
            perm[*slot] = old;
        }
    }
    Ok(perm)
}

pub(crate) fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

pub(crate) fn permute<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&old| v[old].clone()).collect()
}

/// Applies the ordering to cluster parameters, membership rows (each of
/// length k) and labels. Returns the permutation used.
pub fn relabel_estimate<'a>(
    specs: &[DlmSpec],
    params: &mut Vec<ClusterParams>,
    rows: impl IntoIterator<Item = &'a mut Vec<f64>>,
    labels: impl IntoIterator<Item = &'a mut usize>,
    relabel: &Relabel,
) -> Result<Vec<usize>> {
    let paths: Vec<&StatePath> = params.iter().map(|p| &p.theta).collect();
    let perm = relabel_order(specs, &paths, relabel)?;
    apply(&perm, params, rows, labels);
    Ok(perm)
}

pub(crate) fn apply<'a, P: Clone>(
    perm: &[usize],
    params: &mut Vec<P>,
    rows: impl IntoIterator<Item = &'a mut Vec<f64>>,
    labels: impl IntoIterator<Item = &'a mut usize>,
) {
    if perm.iter().enumerate().all(|(a, &b)| a == b) {
        return;
    }
    *params = permute(params, perm);
    for row in rows {
        *row = permute(row, perm);
    }
    let inv = inverse(perm);
    for z in labels {
        *z = inv[*z];
    }
}

/// Relabels every stored draw independently.
pub fn relabel_trace(specs: &[DlmSpec], trace: &mut GibbsTrace, relabel: &Relabel) -> Result<()> {
    for draw in &mut trace.draws {
        let paths: Vec<&StatePath> = draw.theta.iter().collect();
        let perm = relabel_order(specs, &paths, relabel)?;
        draw.theta = permute(&draw.theta, &perm);
        apply(&perm, &mut draw.phi, draw.eta.iter_mut(), draw.z.iter_mut());
    }
    Ok(())
}

/// The time at which the smallest pairwise gap between exchangeable
/// cluster means is largest.
pub fn default_reference_time(specs: &[DlmSpec], paths: &[&StatePath], coord: usize) -> usize {
    let groups: Vec<Vec<usize>> = relabel_groups(specs).into_iter().filter(|g| g.len() > 1).collect();
    if groups.is_empty() || paths.is_empty() {
        return 0;
    }
    let t_len = paths[0].len();
    let mut best = (0, f64::NEG_INFINITY);
    for t in 0..t_len {
        let mut gap = f64::INFINITY;
        for g in &groups {
            for (x, &a) in g.iter().enumerate() {
                for &b in &g[x + 1..] {
                    let d = (key(&specs[a], paths[a], t, coord) - key(&specs[b], paths[b], t, coord)).abs();
                    gap = gap.min(d);
                }
            }
        }
        if gap > best.1 {
            best = (t, gap);
        }
    }
    best.0
}
