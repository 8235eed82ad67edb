//! Per-domain partial label spaces and their union.
//!
//! Every classifier in the pipeline predicts over the unified label space.
//! Source domains only annotate a subset of it; everything else in their
//! label arrays is [`VOID`].

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel stored in label arrays for elements without ground truth.
pub const VOID: i64 = -1;

/// Ordered set of class names. Indices are dense in `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedLabelSpace {
    classes: Vec<String>,
}

impl UnifiedLabelSpace {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// True for every valid class index; false for [`VOID`] and out-of-range values.
    pub fn is_class(&self, label: i64) -> bool {
        label >= 0 && (label as usize) < self.classes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainRole {
    Source,
    Target,
}

/// Declaration of one domain as it appears in an experiment config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDecl {
    pub name: String,
    pub role: DomainRole,
    #[serde(default)]
    pub classes: Vec<String>,
}

impl DomainDecl {
    pub fn source(name: impl Into<String>, classes: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            role: DomainRole::Source,
            classes: classes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn target(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            role: DomainRole::Target,
            classes: Vec::new(),
        }
    }
}

/// A domain with its labeled classes expressed in unified indices.
///
/// Sources are numbered `1..=K` in declaration order; the target (if any)
/// gets `K + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: usize,
    pub name: String,
    pub role: DomainRole,
    /// Unified index of each domain-local class, in declaration order.
    local_to_unified: Vec<usize>,
}

impl DomainSpec {
    pub fn new(domain_id: usize, name: impl Into<String>, role: DomainRole, local_to_unified: Vec<usize>) -> Self {
        Self {
            domain_id,
            name: name.into(),
            role,
            local_to_unified,
        }
    }

    /// The set `C_i` in unified indices.
    pub fn labeled_classes(&self) -> BTreeSet<usize> {
        self.local_to_unified.iter().copied().collect()
    }

    pub fn num_labeled(&self) -> usize {
        self.local_to_unified.len()
    }

    pub fn is_labeled(&self, unified_class: i64) -> bool {
        unified_class != VOID && self.local_to_unified.iter().any(|&c| c as i64 == unified_class)
    }

    pub fn to_unified(&self, local: usize) -> Option<usize> {
        self.local_to_unified.get(local).copied()
    }

    pub fn to_local(&self, unified: usize) -> Option<usize> {
        self.local_to_unified.iter().position(|&c| c == unified)
    }

    pub fn is_source(&self) -> bool {
        self.role == DomainRole::Source
    }
}

/// Builds the unified label space from per-domain declarations.
///
/// Class indices follow first appearance across the declared domains, in
/// input order. Classes shared between sources are identified by name.
pub fn build_unified(decls: &[DomainDecl]) -> Result<(UnifiedLabelSpace, Vec<DomainSpec>)> {
    let num_sources = decls.iter().filter(|d| d.role == DomainRole::Source).count();
    if num_sources == 0 {
        return Err(Error::LabelSpace("at least one source domain is required".into()));
    }
    if decls.iter().filter(|d| d.role == DomainRole::Target).count() > 1 {
        return Err(Error::LabelSpace("at most one target domain may be declared".into()));
    }
    let mut names = HashSet::new();
    for d in decls {
        if !names.insert(d.name.as_str()) {
            return Err(Error::LabelSpace(format!("domain `{}` declared twice", d.name)));
        }
    }

    let mut classes: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for d in decls.iter().filter(|d| d.role == DomainRole::Source) {
        if d.classes.is_empty() {
            return Err(Error::LabelSpace(format!("source `{}` has an empty class list", d.name)));
        }
        let mut seen = HashSet::new();
        for c in &d.classes {
            if !seen.insert(c.as_str()) {
                return Err(Error::LabelSpace(format!(
                    "class `{c}` listed more than once in domain `{}`",
                    d.name
                )));
            }
            if !index.contains_key(c) {
                index.insert(c.clone(), classes.len());
                classes.push(c.clone());
            }
        }
    }
    if classes.len() < 2 {
        return Err(Error::LabelSpace(format!(
            "the unified label space needs at least 2 classes, got {}",
            classes.len()
        )));
    }

    let mut specs = Vec::with_capacity(decls.len());
    let mut next_source = 1;
    for d in decls.iter().filter(|d| d.role == DomainRole::Source) {
        let map = d.classes.iter().map(|c| index[c]).collect();
        specs.push(DomainSpec::new(next_source, &d.name, DomainRole::Source, map));
        next_source += 1;
    }
    if let Some(t) = decls.iter().find(|d| d.role == DomainRole::Target) {
        if !t.classes.is_empty() {
            return Err(Error::LabelSpace(format!("target `{}` must not declare labeled classes", t.name)));
        }
        specs.push(DomainSpec::new(num_sources + 1, &t.name, DomainRole::Target, Vec::new()));
    }
    Ok((UnifiedLabelSpace { classes }, specs))
}

/// Two source classes with overlapping extension. The overlap belongs to
/// the fine class `fine_class` of domain `fine_domain` in the unified space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaxonomyConflict {
    pub fine_domain: usize,
    pub fine_class: usize,
    pub coarse_domain: usize,
    pub coarse_class: usize,
}

impl TaxonomyConflict {
    /// Validated construction against the domain list produced by [`build_unified`].
    pub fn new(
        fine_domain: usize,
        fine_class: usize,
        coarse_domain: usize,
        coarse_class: usize,
        domains: &[DomainSpec],
    ) -> Result<Self> {
        if fine_domain == coarse_domain {
            return Err(Error::Conflict(format!("fine and coarse side are both domain {fine_domain}")));
        }
        if fine_class == coarse_class {
            return Err(Error::Conflict(format!("fine and coarse class are both {fine_class}")));
        }
        let find = |id: usize| {
            domains
                .iter()
                .find(|d| d.domain_id == id && d.is_source())
                .ok_or_else(|| Error::Conflict(format!("no source domain with id {id}")))
        };
        if !find(fine_domain)?.is_labeled(fine_class as i64) {
            return Err(Error::Conflict(format!("class {fine_class} is not labeled in domain {fine_domain}")));
        }
        if !find(coarse_domain)?.is_labeled(coarse_class as i64) {
            return Err(Error::Conflict(format!(
                "class {coarse_class} is not labeled in domain {coarse_domain}"
            )));
        }
        Ok(Self {
            fine_domain,
            fine_class,
            coarse_domain,
            coarse_class,
        })
    }

    /// Resolves domain and class names, as written in a config file.
    pub fn from_names(
        space: &UnifiedLabelSpace,
        domains: &[DomainSpec],
        fine_domain: &str,
        fine_class: &str,
        coarse_domain: &str,
        coarse_class: &str,
    ) -> Result<Self> {
        let domain = |name: &str| {
            domains
                .iter()
                .find(|d| d.name == name)
                .map(|d| d.domain_id)
                .ok_or_else(|| Error::Conflict(format!("unknown domain `{name}`")))
        };
        let class = |name: &str| {
            space
                .index_of(name)
                .ok_or_else(|| Error::Conflict(format!("unknown class `{name}`")))
        };
        Self::new(
            domain(fine_domain)?,
            class(fine_class)?,
            domain(coarse_domain)?,
            class(coarse_class)?,
            domains,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictRole {
    Fine,
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConflictPair {
    pub fine_class: usize,
    pub coarse_class: usize,
    pub role: ConflictRole,
}

/// Conflict pairs in which `domain_id` takes part, on either side.
pub fn conflict_targets(conflicts: &[TaxonomyConflict], domain_id: usize) -> BTreeSet<ConflictPair> {
    let mut out = BTreeSet::new();
    for c in conflicts {
        if c.fine_domain == domain_id {
            out.insert(ConflictPair {
                fine_class: c.fine_class,
                coarse_class: c.coarse_class,
                role: ConflictRole::Fine,
            });
        }
        if c.coarse_domain == domain_id {
            out.insert(ConflictPair {
                fine_class: c.fine_class,
                coarse_class: c.coarse_class,
                role: ConflictRole::Coarse,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digits(range: std::ops::RangeInclusive<u32>) -> Vec<String> {
        range.map(|d| d.to_string()).collect()
    }

    #[test]
    fn disjoint_halves_cover_ten_classes() {
        let (space, doms) = build_unified(&[
            DomainDecl::source("svhn", digits(0..=4)),
            DomainDecl::source("syn", digits(5..=9)),
            DomainDecl::target("mt"),
        ])
        .unwrap();
        assert_eq!(space.len(), 10);
        assert_eq!(doms[0].labeled_classes(), (0..5).collect());
        assert_eq!(doms[1].labeled_classes(), (5..10).collect());
        assert!(doms[0].labeled_classes().is_disjoint(&doms[1].labeled_classes()));
        assert_eq!(doms[2].role, DomainRole::Target);
        assert_eq!(doms[2].domain_id, 3);
        assert!(doms[2].labeled_classes().is_empty());
    }

    #[test]
    fn overlapping_sources_share_indices() {
        let (space, doms) = build_unified(&[
            DomainDecl::source("s1", digits(0..=6)),
            DomainDecl::source("s2", digits(3..=9)),
        ])
        .unwrap();
        assert_eq!(space.len(), 10);
        let overlap: BTreeSet<_> = doms[0]
            .labeled_classes()
            .intersection(&doms[1].labeled_classes())
            .copied()
            .collect();
        assert_eq!(overlap, (3..=6).collect());
    }

    #[test]
    fn first_appearance_order() {
        let (space, _) = build_unified(&[
            DomainDecl::source("a", ["sky", "road"]),
            DomainDecl::source("b", ["car", "road"]),
        ])
        .unwrap();
        assert_eq!(space.classes(), ["sky", "road", "car"]);
    }

    #[test]
    fn single_class_rejected() {
        let err = build_unified(&[DomainDecl::source("s1", ["a"]), DomainDecl::target("t")]).unwrap_err();
        assert!(matches!(err, Error::LabelSpace(_)));
    }

    #[test]
    fn degenerate_declarations_rejected() {
        assert!(build_unified(&[DomainDecl::target("t")]).is_err());
        assert!(build_unified(&[DomainDecl::source("s", Vec::<String>::new()), DomainDecl::source("r", ["a", "b"])]).is_err());
        assert!(build_unified(&[DomainDecl::source("s", ["a", "b", "a"])]).is_err());
        let mut t = DomainDecl::target("t");
        t.classes.push("a".into());
        assert!(build_unified(&[DomainDecl::source("s", ["a", "b"]), t]).is_err());
    }

    #[test]
    fn is_labeled_rules() {
        let d = DomainSpec::new(1, "s1", DomainRole::Source, (0..5).collect());
        assert!(d.is_labeled(3));
        assert!(!d.is_labeled(7));
        assert!(!d.is_labeled(VOID));
    }

    #[test]
    fn local_unified_round_trip() {
        let (_, doms) = build_unified(&[
            DomainDecl::source("s1", ["b", "a", "c"]),
            DomainDecl::source("s2", ["c", "d"]),
        ])
        .unwrap();
        for d in &doms {
            for local in 0..d.num_labeled() {
                let u = d.to_unified(local).unwrap();
                assert_eq!(d.to_local(u), Some(local));
            }
        }
    }

    fn person_rider() -> (UnifiedLabelSpace, Vec<DomainSpec>) {
        build_unified(&[
            DomainDecl::source("gta5", ["road", "person"]),
            DomainDecl::source("synthia", ["sky", "person", "rider"]),
            DomainDecl::target("cityscapes"),
        ])
        .unwrap()
    }

    #[test]
    fn conflict_targets_annotates_roles() {
        let (space, doms) = person_rider();
        // gta5 lumps riders into "person"; synthia splits them out.
        let c = TaxonomyConflict::from_names(&space, &doms, "synthia", "rider", "gta5", "person").unwrap();
        assert!(conflict_targets(&[], 1).is_empty());
        let fine = conflict_targets(&[c], 2);
        assert_eq!(fine.len(), 1);
        let pair = fine.iter().next().unwrap();
        assert_eq!(pair.role, ConflictRole::Fine);
        assert_eq!(pair.fine_class, space.index_of("rider").unwrap());
        assert_eq!(pair.coarse_class, space.index_of("person").unwrap());
        assert_eq!(conflict_targets(&[c], 1).iter().next().unwrap().role, ConflictRole::Coarse);
        assert!(conflict_targets(&[c], 3).is_empty());
    }

    #[test]
    fn conflict_validation() {
        let (space, doms) = person_rider();
        let rider = space.index_of("rider").unwrap();
        let person = space.index_of("person").unwrap();
        assert!(TaxonomyConflict::new(2, rider, 2, person, &doms).is_err());
        assert!(TaxonomyConflict::new(2, person, 1, person, &doms).is_err());
        // rider is not labeled in gta5
        assert!(TaxonomyConflict::new(1, rider, 2, person, &doms).is_err());
        // the target cannot take part
        assert!(TaxonomyConflict::new(3, rider, 1, person, &doms).is_err());
        assert!(TaxonomyConflict::new(2, rider, 1, person, &doms).is_ok());
    }

    #[test]
    fn conflict_targets_order_independent() {
        let (_, doms) = build_unified(&[
            DomainDecl::source("s1", ["a", "b", "c"]),
            DomainDecl::source("s2", ["d", "e", "f"]),
            DomainDecl::source("s3", ["a", "f"]),
        ])
        .unwrap();
        let cs = vec![
            TaxonomyConflict::new(1, 0, 2, 3, &doms).unwrap(),
            TaxonomyConflict::new(2, 5, 1, 2, &doms).unwrap(),
            TaxonomyConflict::new(3, 0, 2, 4, &doms).unwrap(),
        ];
        let mut rev = cs.clone();
        rev.reverse();
        for id in 1..=3 {
            assert_eq!(conflict_targets(&cs, id), conflict_targets(&rev, id));
        }
    }
}
