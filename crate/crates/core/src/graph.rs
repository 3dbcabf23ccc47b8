//! Prerequisite graph over curriculum concepts.
//!
//! Concepts are stored in lexicographic id order and every mastery vector in
//! the crate is indexed the same way. Depths are always recomputed on load;
//! depths declared in the curriculum document are only checked against them.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Curriculum shipped with the crate (27 introductory Python concepts).
pub const PYTHON27_JSON: &str = include_str!("../../../curriculum/python27.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Beginner,
    Intermediate,
    Advanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub prerequisites: Vec<String>,
    pub difficulty: Difficulty,
    #[serde(default)]
    pub declared_depth: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumDoc {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub theta_min: Option<f64>,
    pub concepts: Vec<ConceptRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptNode {
    pub id: String,
    pub name: String,
    pub depth: u32,
    pub prereq_ids: Vec<String>,
    pub difficulty: Difficulty,
    prereqs: Vec<usize>,
}

impl ConceptNode {
    /// Indices (into the graph's concept order) of the direct prerequisites.
    pub fn prereq_indices(&self) -> &[usize] {
        &self.prereqs
    }
}

/// Immutable prerequisite DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptGraph {
    concepts: Vec<ConceptNode>,
    edges: Vec<(usize, usize)>,
    roots: Vec<usize>,
    index: HashMap<String, usize>,
}

/// Per-concept mastery estimates in `[0, 1]`, indexed in graph order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeState {
    pub mastery: Vec<f64>,
}

impl KnowledgeState {
    pub fn uniform(len: usize, level: f64) -> Self {
        Self {
            mastery: vec![level.clamp(0.0, 1.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.mastery.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mastery.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.mastery.is_empty() {
            return 0.0;
        }
        self.mastery.iter().sum::<f64>() / self.mastery.len() as f64
    }
}

impl ConceptGraph {
    pub fn python27() -> Self {
        Self::from_json(PYTHON27_JSON).expect("bundled curriculum is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: CurriculumDoc =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_doc(&doc)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates a curriculum document and builds the graph.
    pub fn from_doc(doc: &CurriculumDoc) -> Result<Self, GraphError> {
        let mut records: Vec<&ConceptRecord> = doc.concepts.iter().collect();
        records.sort_by(|a, b| a.id.cmp(&b.id));

        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateId(rec.id.clone()));
            }
        }

        let mut edges = Vec::new();
        let mut prereqs = Vec::with_capacity(records.len());
        for (to, rec) in records.iter().enumerate() {
            let mut ps = Vec::with_capacity(rec.prerequisites.len());
            for p in &rec.prerequisites {
                let from = *index
                    .get(p)
                    .ok_or_else(|| GraphError::DanglingPrerequisite {
                        concept: rec.id.clone(),
                        prereq: p.clone(),
                    })?;
                if !ps.contains(&from) {
                    ps.push(from);
                    edges.push((from, to));
                }
            }
            prereqs.push(ps);
        }

        let depths = longest_path_depths(&prereqs).map_err(|stuck| {
            GraphError::Cycle(stuck.into_iter().map(|i| records[i].id.clone()).collect())
        })?;

        let mut concepts = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if let Some(declared) = rec.declared_depth {
                if declared != depths[i] {
                    return Err(GraphError::DepthMismatch {
                        concept: rec.id.clone(),
                        declared,
                        computed: depths[i],
                    });
                }
            }
            concepts.push(ConceptNode {
                id: rec.id.clone(),
                name: rec.name.clone(),
                depth: depths[i],
                prereq_ids: prereqs[i].iter().map(|&p| records[p].id.clone()).collect(),
                difficulty: rec.difficulty,
                prereqs: prereqs[i].clone(),
            });
        }
        let roots = (0..concepts.len())
            .filter(|&i| concepts[i].prereqs.is_empty())
            .collect();

        Ok(Self {
            concepts,
            edges,
            roots,
            index,
        })
    }

    /// Serializes back to a curriculum document with computed depths declared.
    pub fn to_doc(&self) -> CurriculumDoc {
        CurriculumDoc {
            name: String::new(),
            description: String::new(),
            theta_min: None,
            concepts: self
                .concepts
                .iter()
                .map(|c| ConceptRecord {
                    id: c.id.clone(),
                    name: c.name.clone(),
                    prerequisites: c.prereq_ids.clone(),
                    difficulty: c.difficulty,
                    declared_depth: Some(c.depth),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[ConceptNode] {
        &self.concepts
    }

    pub fn concept(&self, idx: usize) -> &ConceptNode {
        &self.concepts[idx]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root_indices(&self) -> &[usize] {
        &self.roots
    }

    pub fn root_ids(&self) -> Vec<&str> {
        self.roots.iter().map(|&i| self.concepts[i].id.as_str()).collect()
    }

    pub fn max_depth(&self) -> Option<u32> {
        self.concepts.iter().map(|c| c.depth).max()
    }

    pub fn index_of(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownConcept(id.to_string()))
    }

    pub fn check_dimension(&self, k: &KnowledgeState) -> Result<(), GraphError> {
        if k.len() != self.len() {
            return Err(GraphError::DimensionMismatch {
                expected: self.len(),
                got: k.len(),
            });
        }
        Ok(())
    }

    /// Whether every prerequisite of `idx` has mastery at least `theta_min`.
    /// Callers must have checked the dimension of `k`.
    pub fn is_accessible(&self, idx: usize, k: &KnowledgeState, theta_min: f64) -> bool {
        self.concepts[idx]
            .prereqs
            .iter()
            .all(|&p| k.mastery[p] >= theta_min)
    }

    /// Accessibility indicator per concept.
    pub fn accessible_mask(
        &self,
        k: &KnowledgeState,
        theta_min: f64,
    ) -> Result<Vec<bool>, GraphError> {
        self.check_dimension(k)?;
        Ok((0..self.len())
            .map(|i| self.is_accessible(i, k, theta_min))
            .collect())
    }

    /// Indices of concepts whose prerequisites all meet `theta_min`.
    pub fn accessible_set(
        &self,
        k: &KnowledgeState,
        theta_min: f64,
    ) -> Result<Vec<usize>, GraphError> {
        let mask = self.accessible_mask(k, theta_min)?;
        Ok(mask
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect())
    }

    pub fn accessible_ids(
        &self,
        k: &KnowledgeState,
        theta_min: f64,
    ) -> Result<BTreeSet<String>, GraphError> {
        Ok(self
            .accessible_set(k, theta_min)?
            .into_iter()
            .map(|i| self.concepts[i].id.clone())
            .collect())
    }

    /// Checks that growing mastery from `before` to `after` never removes a
    /// concept from the accessible set.
    pub fn validate_monotone_expansion(
        &self,
        before: &KnowledgeState,
        after: &KnowledgeState,
        theta_min: f64,
    ) -> Result<bool, GraphError> {
        self.check_dimension(before)?;
        self.check_dimension(after)?;
        if let Some(i) = (0..self.len()).find(|&i| after.mastery[i] < before.mastery[i]) {
            return Err(GraphError::NotMonotone(self.concepts[i].id.clone()));
        }
        let a = self.accessible_mask(before, theta_min)?;
        let b = self.accessible_mask(after, theta_min)?;
        Ok(a.iter().zip(&b).all(|(&x, &y)| !x || y))
    }
}

/// Longest-path depth from any root via Kahn's algorithm. On a cycle returns
/// the indices that never reached in-degree zero.
fn longest_path_depths(prereqs: &[Vec<usize>]) -> Result<Vec<u32>, Vec<usize>> {
    let n = prereqs.len();
    let mut indegree: Vec<usize> = prereqs.iter().map(Vec::len).collect();
    let mut dependents = vec![Vec::new(); n];
    for (to, ps) in prereqs.iter().enumerate() {
        for &from in ps {
            dependents[from].push(to);
        }
    }
    let mut depth = vec![0u32; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut head = 0;
    while head < queue.len() {
        let node = queue[head];
        head += 1;
        for &next in &dependents[node] {
            depth[next] = depth[next].max(depth[node] + 1);
            indegree[next] -= 1;
            if indegree[next] == 0 {
                queue.push(next);
            }
        }
    }
    if queue.len() != n {
        return Err((0..n).filter(|&i| indegree[i] > 0).collect());
    }
    Ok(depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, prereqs: &[&str]) -> ConceptRecord {
        ConceptRecord {
            id: id.into(),
            name: id.to_uppercase(),
            prerequisites: prereqs.iter().map(|s| s.to_string()).collect(),
            difficulty: Difficulty::Beginner,
            declared_depth: None,
        }
    }

    fn doc(concepts: Vec<ConceptRecord>) -> CurriculumDoc {
        CurriculumDoc {
            name: "t".into(),
            description: String::new(),
            theta_min: None,
            concepts,
        }
    }

    #[test]
    fn bundled_curriculum_shape() {
        let g = ConceptGraph::python27();
        assert_eq!(g.len(), 27);
        assert_eq!(g.root_ids(), vec!["c01"]);
        assert_eq!(g.max_depth(), Some(7));
        let c22 = g.concept(g.index_of("c22").unwrap());
        assert_eq!(c22.name, "Inheritance");
        assert_eq!(c22.depth, 7);
        let ids: Vec<_> = g.concepts().iter().map(|c| c.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn empty_curriculum_is_valid() {
        let g = ConceptGraph::from_doc(&doc(vec![])).unwrap();
        assert!(g.is_empty());
        assert!(g.root_ids().is_empty());
    }

    #[test]
    fn two_cycle_is_rejected() {
        let d = doc(vec![rec("c01", &[]), rec("c21", &["c22"]), rec("c22", &["c21"])]);
        match ConceptGraph::from_doc(&d) {
            Err(GraphError::Cycle(ids)) => assert_eq!(ids, vec!["c21", "c22"]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_dangling_are_rejected() {
        let d = doc(vec![rec("a", &[]), rec("a", &[])]);
        assert!(matches!(
            ConceptGraph::from_doc(&d),
            Err(GraphError::DuplicateId(id)) if id == "a"
        ));
        let d = doc(vec![rec("a", &["zz"])]);
        assert!(matches!(
            ConceptGraph::from_doc(&d),
            Err(GraphError::DanglingPrerequisite { .. })
        ));
    }

    #[test]
    fn declared_depth_is_a_checksum() {
        let mut b = rec("b", &["a"]);
        b.declared_depth = Some(2);
        let d = doc(vec![rec("a", &[]), b]);
        assert!(matches!(
            ConceptGraph::from_doc(&d),
            Err(GraphError::DepthMismatch { declared: 2, computed: 1, .. })
        ));
    }

    #[test]
    fn depth_recomputation_is_a_fixpoint() {
        let g = ConceptGraph::python27();
        let again = ConceptGraph::from_doc(&g.to_doc()).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn accessible_set_examples() {
        let g = ConceptGraph::python27();
        let zero = KnowledgeState::uniform(27, 0.0);
        assert_eq!(
            g.accessible_ids(&zero, 0.5).unwrap(),
            BTreeSet::from(["c01".to_string()])
        );
        let one = KnowledgeState::uniform(27, 1.0);
        assert_eq!(g.accessible_set(&one, 0.5).unwrap().len(), 27);

        let mut k = KnowledgeState::uniform(27, 0.0);
        k.mastery[g.index_of("c01").unwrap()] = 0.6;
        k.mastery[g.index_of("c02").unwrap()] = 0.55;
        let got: Vec<String> = g.accessible_ids(&k, 0.5).unwrap().into_iter().collect();
        assert_eq!(got, ["c01", "c02", "c03", "c04", "c05", "c08"]);
    }

    #[test]
    fn dimension_mismatch() {
        let g = ConceptGraph::python27();
        let k = KnowledgeState::uniform(3, 0.0);
        assert!(matches!(
            g.accessible_set(&k, 0.5),
            Err(GraphError::DimensionMismatch { expected: 27, got: 3 })
        ));
    }

    #[test]
    fn monotone_expansion_examples() {
        let g = ConceptGraph::python27();
        let zero = KnowledgeState::uniform(27, 0.0);
        let one = KnowledgeState::uniform(27, 1.0);
        assert!(g.validate_monotone_expansion(&zero, &zero, 0.5).unwrap());
        assert!(g.validate_monotone_expansion(&zero, &one, 0.5).unwrap());
        assert!(matches!(
            g.validate_monotone_expansion(&one, &zero, 0.5),
            Err(GraphError::NotMonotone(_))
        ));
    }
}
