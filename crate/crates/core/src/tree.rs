//! Heap-indexed binary genealogies.
//!
//! Cell `k` has daughters `2k` (even type) and `2k + 1` (odd type); the root
//! is `1`. A tree stores only its observed cells, and missingness is
//! hereditary: an observed cell always has an observed mother.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heap index of a cell. The root is 1.
pub type NodeId = u64;

/// Deepest generation a forest may hold, so that every child index fits in
/// a `u64`.
pub const MAX_DEPTH: u32 = 62;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellType {
    Even = 0,
    Odd = 1,
}

impl CellType {
    pub fn of(k: NodeId) -> Self {
        if k % 2 == 0 {
            CellType::Even
        } else {
            CellType::Odd
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            CellType::Even
        } else {
            CellType::Odd
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRelations {
    pub parent: Option<NodeId>,
    pub children: (NodeId, NodeId),
    pub generation: u32,
    pub cell_type: CellType,
}

/// Generation of `k`, i.e. `floor(log2 k)`. `k` must be positive.
#[inline]
pub fn generation(k: NodeId) -> u32 {
    debug_assert!(k > 0);
    63 - k.leading_zeros()
}

pub fn node_relations(k: NodeId) -> Result<NodeRelations> {
    if k == 0 || k > (u64::MAX >> 1) {
        return Err(Error::InvalidNode(k));
    }
    Ok(NodeRelations {
        parent: (k > 1).then_some(k / 2),
        children: (2 * k, 2 * k + 1),
        generation: generation(k),
        cell_type: CellType::of(k),
    })
}

/// One observed genealogy. Cells are kept sorted by heap index, which is
/// also breadth-first order.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedTree {
    ids: Vec<NodeId>,
    values: Vec<f64>,
    children: Vec<[u32; 2]>,
}

impl ObservedTree {
    /// Observation skeleton without measurements.
    pub fn skeleton(ids: impl IntoIterator<Item = NodeId>) -> Result<Self> {
        let mut ids: Vec<NodeId> = ids.into_iter().collect();
        ids.sort_unstable();
        Self::build(ids, Vec::new())
    }

    /// Tree with one measurement per observed cell.
    pub fn with_values(cells: impl IntoIterator<Item = (NodeId, f64)>) -> Result<Self> {
        let mut cells: Vec<(NodeId, f64)> = cells.into_iter().collect();
        cells.sort_unstable_by_key(|c| c.0);
        if let Some(&(k, _)) = cells.iter().find(|c| !c.1.is_finite()) {
            return Err(Error::InvalidForest(format!(
                "node {k} carries a non-finite value"
            )));
        }
        let (ids, values) = cells.into_iter().unzip();
        Self::build(ids, values)
    }

    fn build(ids: Vec<NodeId>, values: Vec<f64>) -> Result<Self> {
        if ids.first() != Some(&1) {
            return match ids.first() {
                Some(&0) => Err(Error::InvalidNode(0)),
                _ => Err(Error::MissingRoot { tree: 0 }),
            };
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateNode { tree: 0, node: w[0] });
        }
        if let Some(&k) = ids.last() {
            if generation(k) > MAX_DEPTH {
                return Err(Error::InvalidNode(k));
            }
        }
        let mut children = vec![[NONE; 2]; ids.len()];
        for (idx, &k) in ids.iter().enumerate().skip(1) {
            // Parents precede children in sorted order.
            let parent = ids[..idx]
                .binary_search(&(k / 2))
                .map_err(|_| Error::NonHereditary { tree: 0, node: k })?;
            children[parent][(k % 2) as usize] = idx as u32;
        }
        Ok(Self {
            ids,
            values,
            children,
        })
    }

    /// Assembles a tree from breadth-first arrays produced by a trusted
    /// generator.
    pub(crate) fn from_parts(ids: Vec<NodeId>, values: Vec<f64>, children: Vec<[u32; 2]>) -> Self {
        debug_assert_eq!(ids.len(), children.len());
        debug_assert!(values.is_empty() || values.len() == ids.len());
        Self {
            ids,
            values,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn values(&self) -> Option<&[f64]> {
        (!self.values.is_empty()).then_some(self.values.as_slice())
    }

    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }

    /// Positions of the even and odd daughters of the cell at `idx`.
    #[inline]
    pub fn children_of(&self, idx: usize) -> [Option<usize>; 2] {
        let c = self.children[idx];
        [
            (c[0] != NONE).then_some(c[0] as usize),
            (c[1] != NONE).then_some(c[1] as usize),
        ]
    }

    pub fn position(&self, k: NodeId) -> Option<usize> {
        self.ids.binary_search(&k).ok()
    }

    pub fn contains(&self, k: NodeId) -> bool {
        self.position(k).is_some()
    }

    pub fn value(&self, k: NodeId) -> Option<f64> {
        let idx = self.position(k)?;
        self.values.get(idx).copied()
    }

    /// Deepest generation holding an observed cell.
    pub fn height(&self) -> u32 {
        self.ids.last().map_or(0, |&k| generation(k))
    }

    pub fn without_values(&self) -> Self {
        Self {
            ids: self.ids.clone(),
            values: Vec::new(),
            children: self.children.clone(),
        }
    }
}

/// `m` observed trees with a common nominal depth. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedForest {
    trees: Vec<ObservedTree>,
    depth: u32,
    has_values: bool,
}

impl ObservedForest {
    pub fn new(trees: Vec<ObservedTree>, depth: u32) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidForest("a forest needs at least one tree".into()));
        }
        if depth > MAX_DEPTH {
            return Err(Error::InvalidForest(format!(
                "depth {depth} exceeds the supported maximum {MAX_DEPTH}"
            )));
        }
        let has_values = trees[0].has_values();
        for (j, tree) in trees.iter().enumerate() {
            if tree.is_empty() {
                return Err(Error::MissingRoot { tree: j });
            }
            if tree.has_values() != has_values {
                return Err(Error::MixedValues { tree: j });
            }
            if tree.height() > depth {
                return Err(Error::InvalidForest(format!(
                    "tree {j} reaches generation {} beyond depth {depth}",
                    tree.height()
                )));
            }
        }
        Ok(Self {
            trees,
            depth,
            has_values,
        })
    }

    /// Forest whose depth is the deepest observed generation.
    pub fn from_trees(trees: Vec<ObservedTree>) -> Result<Self> {
        let depth = trees.iter().map(ObservedTree::height).max().unwrap_or(0);
        Self::new(trees, depth)
    }

    pub fn trees(&self) -> &[ObservedTree] {
        &self.trees
    }

    pub fn m(&self) -> usize {
        self.trees.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn has_values(&self) -> bool {
        self.has_values
    }

    pub fn total_cells(&self) -> usize {
        self.trees.iter().map(ObservedTree::len).sum()
    }

    pub fn without_values(&self) -> Self {
        Self {
            trees: self.trees.iter().map(ObservedTree::without_values).collect(),
            depth: self.depth,
            has_values: false,
        }
    }

    pub fn check_generation(&self, n: u32) -> Result<()> {
        if n > self.depth {
            Err(Error::OutOfRange {
                requested: n,
                depth: self.depth,
            })
        } else {
            Ok(())
        }
    }
}

/// Observed-cell counts of a forest.
///
/// At index `n`: `t_star` counts observed cells in generations `0..=n` and
/// `g_star` those in generation `n`. The daughter counts use mothers in
/// generations `0..n`, so that everything at index `n` only needs data up
/// to generation `n`: `t_star_i` counts observed type-`i` daughters of
/// such mothers and `t_star_01` the mothers with both daughters observed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestCounts {
    pub t_star: u64,
    pub g_star: u64,
    pub t_star_0: u64,
    pub t_star_1: u64,
    pub t_star_01: u64,
}

impl ForestCounts {
    pub fn t_star_type(&self, i: usize) -> u64 {
        if i == 0 {
            self.t_star_0
        } else {
            self.t_star_1
        }
    }

    /// Observed cells in generations `0..n`, i.e. `t_star` one index back.
    pub fn t_star_previous(&self) -> u64 {
        self.t_star - self.g_star
    }
}

pub fn counts(forest: &ObservedForest, n: u32) -> Result<ForestCounts> {
    forest.check_generation(n)?;
    let mut c = ForestCounts::default();
    for tree in forest.trees() {
        for (idx, &k) in tree.ids().iter().enumerate() {
            let g = generation(k);
            if g > n {
                break;
            }
            c.t_star += 1;
            if g == n {
                c.g_star += 1;
                continue;
            }
            let [d0, d1] = tree.children_of(idx);
            c.t_star_0 += u64::from(d0.is_some());
            c.t_star_1 += u64::from(d1.is_some());
            c.t_star_01 += u64::from(d0.is_some() && d1.is_some());
        }
    }
    Ok(c)
}

/// Counts restricted to mothers in generation `g`: `t_star` and `g_star`
/// both count the observed cells of generation `g`, and the daughter counts
/// refer to their daughters in generation `g + 1`.
pub fn generation_counts(forest: &ObservedForest, g: u32) -> Result<ForestCounts> {
    forest.check_generation(g)?;
    let mut c = ForestCounts::default();
    for tree in forest.trees() {
        for (idx, &k) in tree.ids().iter().enumerate() {
            match generation(k).cmp(&g) {
                std::cmp::Ordering::Less => continue,
                std::cmp::Ordering::Greater => break,
                std::cmp::Ordering::Equal => {}
            }
            c.t_star += 1;
            c.g_star += 1;
            let [d0, d1] = tree.children_of(idx);
            c.t_star_0 += u64::from(d0.is_some());
            c.t_star_1 += u64::from(d1.is_some());
            c.t_star_01 += u64::from(d0.is_some() && d1.is_some());
        }
    }
    Ok(c)
}
