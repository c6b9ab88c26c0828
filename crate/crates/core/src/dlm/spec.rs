use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension building block of the built-in specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Level only: `F = [1]`, `G = [1]`.
    RandomWalk,
    /// Level and slope: `F = [1 0]`, `G = [[1 1] [0 1]]`.
    LocalLinear,
}

impl Family {
    pub fn state_dim(self) -> usize {
        match self {
            Family::RandomWalk => 1,
            Family::LocalLinear => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::RandomWalk => "random_walk",
            Family::LocalLinear => "local_linear",
        }
    }
}

/// Identifies a `(F, G)` pair. Equal pairs always share a tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructuralTag(u64);

impl fmt::Display for StructuralTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// A group of state components that only ever interacts with the listed
/// observation dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBlock {
    pub dims: Vec<usize>,
    pub states: Vec<usize>,
}

impl StateBlock {
    /// True when the block is driven by exactly one observation dimension.
    pub fn is_separable(&self) -> bool {
        self.dims.len() == 1
    }
}

/// The dynamics of one cluster: observation matrix `F` (m x p), evolution
/// matrix `G` (p x p) and the discount factor that sets the evolution variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmSpec {
    obs_matrix: DMatrix<f64>,
    evo_matrix: DMatrix<f64>,
    discount: f64,
    label: String,
    blocks: Vec<StateBlock>,
}

impl DlmSpec {
    pub fn new(obs_matrix: DMatrix<f64>, evo_matrix: DMatrix<f64>, discount: f64) -> Result<Self> {
        Self::with_label(obs_matrix, evo_matrix, discount, "custom")
    }

    pub fn with_label(
        obs_matrix: DMatrix<f64>,
        evo_matrix: DMatrix<f64>,
        discount: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let p = obs_matrix.ncols();
        if obs_matrix.nrows() == 0 || p == 0 {
            return Err(Error::invalid("observation matrix must be non-empty"));
        }
        if evo_matrix.nrows() != p || evo_matrix.ncols() != p {
            return Err(Error::invalid(format!(
                "evolution matrix must be {p} x {p}, got {} x {}",
                evo_matrix.nrows(),
                evo_matrix.ncols()
            )));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::invalid(format!(
                "evolution discount must lie in (0, 1], got {discount}"
            )));
        }
        if obs_matrix.iter().chain(evo_matrix.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("F and G must be finite"));
        }
        let blocks = state_blocks(&obs_matrix, &evo_matrix);
        Ok(Self {
            obs_matrix,
            evo_matrix,
            discount,
            label: label.into(),
            blocks,
        })
    }

    /// `F = I_m`, `G = I_m`.
    pub fn random_walk(m: usize, discount: f64) -> Result<Self> {
        Self::per_dimension(&vec![Family::RandomWalk; m], discount)
    }

    /// Level plus slope in every dimension.
    pub fn local_linear(m: usize, discount: f64) -> Result<Self> {
        Self::per_dimension(&vec![Family::LocalLinear; m], discount)
    }

    /// Block-diagonal composition, one family per observation dimension.
    pub fn per_dimension(families: &[Family], discount: f64) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::invalid("at least one dimension is required"));
        }
        let m = families.len();
        let p: usize = families.iter().map(|f| f.state_dim()).sum();
        let mut f = DMatrix::zeros(m, p);
        let mut g = DMatrix::zeros(p, p);
        let mut offset = 0;
        for (l, fam) in families.iter().enumerate() {
            f[(l, offset)] = 1.0;
            g[(offset, offset)] = 1.0;
            if *fam == Family::LocalLinear {
                g[(offset, offset + 1)] = 1.0;
                g[(offset + 1, offset + 1)] = 1.0;
            }
            offset += fam.state_dim();
        }
        let label = families
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join("+");
        Self::with_label(f, g, discount, label)
    }

    pub fn obs_matrix(&self) -> &DMatrix<f64> {
        &self.obs_matrix
    }

    pub fn evo_matrix(&self) -> &DMatrix<f64> {
        &self.evo_matrix
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_matrix.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.obs_matrix.ncols()
    }

    pub fn blocks(&self) -> &[StateBlock] {
        &self.blocks
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::with_label(
            self.obs_matrix.clone(),
            self.evo_matrix.clone(),
            discount,
            self.label.clone(),
        )
    }

    pub fn same_structure(&self, other: &DlmSpec) -> bool {
        self.obs_matrix == other.obs_matrix && self.evo_matrix == other.evo_matrix
    }

    pub fn structural_tag(&self) -> StructuralTag {
        let mut h = DefaultHasher::new();
        self.obs_matrix.nrows().hash(&mut h);
        self.obs_matrix.ncols().hash(&mut h);
        for v in self.obs_matrix.iter().chain(self.evo_matrix.iter()) {
            // +0.0 so that -0.0 and 0.0 hash alike, matching `==`
            (v + 0.0).to_bits().hash(&mut h);
        }
        StructuralTag(h.finish())
    }
}

/// Partition of cluster indices into groups sharing `(F, G)`, in order of
/// first appearance.
pub fn structural_sets(specs: &[DlmSpec]) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for (j, spec) in specs.iter().enumerate() {
        match sets.iter_mut().find(|s| specs[s[0]].same_structure(spec)) {
            Some(set) => set.push(j),
            None => sets.push(vec![j]),
        }
    }
    sets
}

/// Connected components of the bipartite graph linking observation dimensions
/// to state components through non-zero entries of `F` and `G`.
fn state_blocks(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Vec<StateBlock> {
    let m = f.nrows();
    let p = f.ncols();
    // nodes: 0..m dims, m..m+p states
    let mut parent: Vec<usize> = (0..m + p).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    let union = |a: usize, b: usize, parent: &mut Vec<usize>| {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for l in 0..m {
        for s in 0..p {
            if f[(l, s)] != 0.0 {
                union(l, m + s, &mut parent);
            }
        }
    }
    for r in 0..p {
        for c in 0..p {
            if r != c && g[(r, c)] != 0.0 {
                union(m + r, m + c, &mut parent);
            }
        }
    }
    let mut blocks: Vec<(usize, StateBlock)> = Vec::new();
    for node in 0..m + p {
        let root = find(&mut parent, node);
        let idx = match blocks.iter().position(|(r, _)| *r == root) {
            Some(idx) => idx,
            None => {
                blocks.push((
                    root,
                    StateBlock {
                        dims: Vec::new(),
                        states: Vec::new(),
                    },
                ));
                blocks.len() - 1
            }
        };
        if node < m {
            blocks[idx].1.dims.push(node);
        } else {
            blocks[idx].1.states.push(node - m);
        }
    }
    blocks
        .into_iter()
        .map(|(_, b)| b)
        .filter(|b| !b.states.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_shapes() {
        let rw = DlmSpec::random_walk(2, 0.9).unwrap();
        assert_eq!(rw.obs_matrix(), &DMatrix::<f64>::identity(2, 2));
        assert_eq!(rw.evo_matrix(), &DMatrix::<f64>::identity(2, 2));
        let ll = DlmSpec::local_linear(1, 0.9).unwrap();
        assert_eq!(ll.obs_matrix(), &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(ll.evo_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        let mixed = DlmSpec::per_dimension(&[Family::LocalLinear, Family::RandomWalk], 0.8).unwrap();
        assert_eq!(mixed.state_dim(), 3);
        assert_eq!(mixed.blocks().len(), 2);
        assert!(mixed.blocks().iter().all(StateBlock::is_separable));
        assert_eq!(mixed.blocks()[0].states, vec![0, 1]);
    }

    #[test]
    fn coupled_state_is_one_block() {
        let f = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let g = DMatrix::identity(1, 1);
        let spec = DlmSpec::new(f, g, 0.9).unwrap();
        assert_eq!(spec.blocks().len(), 1);
        assert_eq!(spec.blocks()[0].dims, vec![0, 1]);
        assert!(!spec.blocks()[0].is_separable());
    }

    #[test]
    fn tags_follow_structure_not_discount() {
        let a = DlmSpec::random_walk(1, 0.9).unwrap();
        let b = DlmSpec::random_walk(1, 0.5).unwrap();
        let c = DlmSpec::local_linear(1, 0.9).unwrap();
        assert_eq!(a.structural_tag(), b.structural_tag());
        assert_ne!(a.structural_tag(), c.structural_tag());
        assert_eq!(structural_sets(&[a, c, b]), vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn rejects_bad_discount_and_shapes() {
        assert!(DlmSpec::random_walk(1, 0.0).is_err());
        assert!(DlmSpec::random_walk(1, 1.5).is_err());
        assert!(DlmSpec::new(DMatrix::identity(1, 2), DMatrix::identity(1, 1), 0.9).is_err());
    }
}
