//! Category concept sets, the cross-set similarity structure that drives
//! embedding fusion and logits debiasing, and the category tree used for
//! coarse-to-fine prediction.

use crate::error::{Error, Result};
use crate::tensor::{cosine_similarity_matrix, l2_normalize, DenseTensor};

/// Whether a concept set describes the categories seen at training time or
/// the categories requested at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceptRole {
    Training,
    Predicting,
}

/// Ordered category names with unit-norm text embeddings and thing/stuff
/// flags. Text embeddings are inputs, never computed here: any encoder
/// export with matching width works.
#[derive(Debug, Clone)]
pub struct ConceptSet {
    names: Vec<String>,
    embeddings: DenseTensor,
    is_thing: Vec<bool>,
    role: ConceptRole,
}

impl ConceptSet {
    /// Build a concept set, l2-normalizing the embedding rows and rejecting
    /// duplicate names and count mismatches.
    pub fn new(
        names: Vec<String>,
        embeddings: DenseTensor,
        is_thing: Vec<bool>,
        role: ConceptRole,
    ) -> Result<Self> {
        embeddings.expect_rank(2, "concept set embeddings")?;
        let rows = embeddings.shape()[0];
        if names.len() != rows || is_thing.len() != names.len() {
            return Err(Error::CountMismatch {
                names: names.len(),
                rows,
                flags: is_thing.len(),
            });
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidShape {
                    shape: vec![i],
                    reason: "empty category name".into(),
                });
            }
            if names[..i].contains(name) {
                return Err(Error::DuplicateName { name: name.clone() });
            }
        }
        let embeddings = l2_normalize(&embeddings)?;
        Ok(Self {
            names,
            embeddings,
            is_thing,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Unit-norm text embeddings, one row per category.
    pub fn embeddings(&self) -> &DenseTensor {
        &self.embeddings
    }

    pub fn thing_flags(&self) -> &[bool] {
        &self.is_thing
    }

    pub fn role(&self) -> ConceptRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.embeddings.shape()[1]
    }
}

/// Cross-set similarity structure between a predicting and a training
/// concept set: the full cosine matrix, each predicting category's best
/// match in the training set, and their mean (the domain similarity).
#[derive(Debug, Clone)]
pub struct SimilarityProfile {
    h: DenseTensor,
    per_category_max: Vec<f64>,
    domain_similarity: f64,
}

impl SimilarityProfile {
    /// Cosine matrix H, predicting categories by rows, training by columns.
    pub fn h(&self) -> &DenseTensor {
        &self.h
    }

    /// Best training-set match per predicting category (row maxima of H).
    pub fn per_category_max(&self) -> &[f64] {
        &self.per_category_max
    }

    /// Mean of the per-category maxima; the coefficient that controls how
    /// much pooled visual evidence is blended into the query embeddings.
    pub fn domain_similarity(&self) -> f64 {
        self.domain_similarity
    }
}

/// Compute the similarity profile of `predicting` against `training`.
pub fn build_similarity_profile(
    predicting: &ConceptSet,
    training: &ConceptSet,
) -> Result<SimilarityProfile> {
    if predicting.is_empty() {
        return Err(Error::EmptyConceptSet {
            which: "predicting".into(),
        });
    }
    if training.is_empty() {
        return Err(Error::EmptyConceptSet {
            which: "training".into(),
        });
    }
    let h = cosine_similarity_matrix(predicting.embeddings(), training.embeddings())?;
    let (m, n) = (h.shape()[0], h.shape()[1]);
    let mut per_category_max = Vec::with_capacity(m);
    for i in 0..m {
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            best = best.max(h.at2(i, j));
        }
        per_category_max.push(best);
    }
    let domain_similarity = per_category_max.iter().sum::<f64>() / m as f64;
    Ok(SimilarityProfile {
        h,
        per_category_max,
        domain_similarity,
    })
}

/// One node of a category tree.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: u64,
    pub name: String,
    /// Unit-norm text embedding of the node's category name.
    pub embedding: Vec<f64>,
    pub children: Vec<u64>,
}

/// Rooted taxonomy of concepts for hierarchical coarse-to-fine prediction.
///
/// A root named `"root"` is treated as synthetic: it anchors the tree but is
/// excluded from predicted paths.
#[derive(Debug, Clone)]
pub struct CategoryTree {
    nodes: Vec<TreeNode>,
    root: u64,
}

const UNIT_TOL: f64 = 1e-6;

impl CategoryTree {
    /// Build a tree from nodes and validate it (single root, acyclic,
    /// unit embeddings).
    pub fn new(nodes: Vec<TreeNode>, root: u64) -> Result<Self> {
        let tree = Self { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    /// Build a tree from parent links, normalizing embeddings on load.
    /// `parents[i] = None` marks the root.
    pub fn from_parent_links(
        ids: Vec<u64>,
        names: Vec<String>,
        parents: Vec<Option<u64>>,
        embeddings: &DenseTensor,
    ) -> Result<Self> {
        embeddings.expect_rank(2, "tree embeddings")?;
        if ids.len() != names.len()
            || ids.len() != parents.len()
            || ids.len() != embeddings.shape()[0]
        {
            return Err(Error::CountMismatch {
                names: names.len(),
                rows: embeddings.shape()[0],
                flags: parents.len(),
            });
        }
        let normalized = l2_normalize(embeddings)?;
        let mut root = None;
        let mut nodes: Vec<TreeNode> = ids
            .iter()
            .zip(&names)
            .enumerate()
            .map(|(i, (&id, name))| TreeNode {
                id,
                name: name.clone(),
                embedding: normalized.row(i).to_vec(),
                children: Vec::new(),
            })
            .collect();
        for (i, parent) in parents.iter().enumerate() {
            match parent {
                None => match root {
                    None => root = Some(ids[i]),
                    Some(first) => {
                        return Err(Error::MultipleRoots {
                            first,
                            second: ids[i],
                        })
                    }
                },
                Some(pid) => {
                    let slot = nodes
                        .iter_mut()
                        .find(|n| n.id == *pid)
                        .ok_or(Error::IndexOutOfRange {
                            index: *pid as usize,
                            len: ids.len(),
                        })?;
                    slot.children.push(ids[i]);
                }
            }
        }
        let root = root.ok_or(Error::EmptyTree)?;
        for node in &mut nodes {
            node.children.sort_unstable();
        }
        Self::new(nodes, root)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn node(&self, id: u64) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// The root anchors the taxonomy without naming a real category when it
    /// is called `"root"`; predicted paths skip it in that case.
    pub fn root_is_synthetic(&self) -> bool {
        self.node(self.root).map_or(false, |n| n.name == "root")
    }

    /// Confirm acyclicity, single-rootedness and unit embeddings, reporting
    /// the first violation found.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTree);
        }
        if self.node(self.root).is_none() {
            return Err(Error::IndexOutOfRange {
                index: self.root as usize,
                len: self.nodes.len(),
            });
        }
        for node in &self.nodes {
            let norm: f64 = node.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NonUnitEmbedding {
                    node: node.id,
                    norm,
                    tol: UNIT_TOL,
                });
            }
        }
        // every non-root must be reachable from the root exactly once
        let mut seen = std::collections::BTreeSet::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(Error::CycleDetected { node: id });
            }
            let node = self.node(id).ok_or(Error::IndexOutOfRange {
                index: id as usize,
                len: self.nodes.len(),
            })?;
            stack.extend(node.children.iter().copied());
        }
        if seen.len() != self.nodes.len() {
            // an unreachable node is a second root (or part of a detached cycle)
            let orphan = self
                .nodes
                .iter()
                .find(|n| !seen.contains(&n.id))
                .expect("count mismatch implies an unreachable node");
            return Err(Error::MultipleRoots {
                first: self.root,
                second: orphan.id,
            });
        }
        Ok(())
    }
}

/// Validate a category tree, returning a structured error for the first
/// violation.
pub fn validate_tree(tree: &CategoryTree) -> Result<()> {
    tree.validate()
}
