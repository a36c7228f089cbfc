//! Course structure model: the five-level module tree, its linearized base
//! map, week resolution, and event-reference lookup.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Level of a module within the five-level hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    CourseRoot,
    Chapter,
    Sequential,
    Vertical,
    Block,
}

impl ModuleKind {
    /// The depth this kind must sit at (root = 0, blocks = 4).
    pub fn expected_depth(self) -> u8 {
        match self {
            ModuleKind::CourseRoot => 0,
            ModuleKind::Chapter => 1,
            ModuleKind::Sequential => 2,
            ModuleKind::Vertical => 3,
            ModuleKind::Block => 4,
        }
    }

    pub fn from_depth(depth: u8) -> Option<Self> {
        match depth {
            0 => Some(ModuleKind::CourseRoot),
            1 => Some(ModuleKind::Chapter),
            2 => Some(ModuleKind::Sequential),
            3 => Some(ModuleKind::Vertical),
            4 => Some(ModuleKind::Block),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleKind::CourseRoot => "course_root",
            ModuleKind::Chapter => "chapter",
            ModuleKind::Sequential => "sequential",
            ModuleKind::Vertical => "vertical",
            ModuleKind::Block => "block",
        }
    }
}

/// Content category of a block. Unrecognized categories map to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockType {
    Html,
    Problem,
    Video,
    Discussion,
    Openassessment,
    #[default]
    #[serde(other)]
    Other,
}

impl BlockType {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockType::Html => "html",
            BlockType::Problem => "problem",
            BlockType::Video => "video",
            BlockType::Discussion => "discussion",
            BlockType::Openassessment => "openassessment",
            BlockType::Other => "other",
        }
    }

    /// Block types that carry graded work.
    pub fn is_assessment(self) -> bool {
        matches!(self, BlockType::Problem | BlockType::Openassessment)
    }
}

/// One node of the course hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentModule {
    pub id: String,
    pub kind: ModuleKind,
    pub block_type: BlockType,
    pub display_name: String,
    pub parent_id: Option<String>,
    /// 0-based position among siblings.
    pub ordinal: u32,
    /// Distance from the root, 0..=4.
    pub depth: u8,
}

/// Errors raised while parsing or validating a course structure document.
#[derive(Debug, Error)]
pub enum CourseError {
    #[error("malformed course document: {0}")]
    MalformedDocument(String),
    #[error("structural error at module '{id}': {reason}")]
    StructuralError { id: String, reason: String },
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("module '{0}' belongs to no week")]
    NoWeek(String),
    #[error("malformed week override at line {line}: {reason}")]
    MalformedOverride { line: usize, reason: String },
}

impl CourseError {
    fn structural(id: &str, reason: impl Into<String>) -> Self {
        CourseError::StructuralError {
            id: id.to_string(),
            reason: reason.into(),
        }
    }
}

/// On-disk representation of a course structure document.
#[derive(Debug, Serialize, Deserialize)]
struct CourseDoc {
    course_id: String,
    title: String,
    modules: Vec<ModuleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModuleDoc {
    id: String,
    kind: ModuleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block_type: Option<BlockType>,
    display_name: String,
    parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ordinal: Option<u32>,
}

/// The validated course hierarchy. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CourseTree {
    pub course_id: String,
    pub title: String,
    modules: BTreeMap<String, ContentModule>,
    /// Child ids per parent, sorted by ordinal.
    children: BTreeMap<String, Vec<String>>,
    root_id: String,
    /// Explicit chapter -> week assignments; week 0 marks supplemental content.
    week_overrides: BTreeMap<String, u32>,
}

impl CourseTree {
    /// Parse and validate a course structure document.
    ///
    /// Modules without an explicit ordinal take their position in file order
    /// among siblings. Levels beyond depth 4 are rejected.
    pub fn parse(document: &str) -> Result<Self, CourseError> {
        let doc: CourseDoc = serde_json::from_str(document)
            .map_err(|e| CourseError::MalformedDocument(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: CourseDoc) -> Result<Self, CourseError> {
        let mut seen = HashSet::new();
        for m in &doc.modules {
            if !seen.insert(m.id.as_str()) {
                return Err(CourseError::structural(&m.id, "duplicate id"));
            }
        }

        // Ordinals default to file order among same-parent siblings.
        let mut file_order: HashMap<Option<&str>, u32> = HashMap::new();
        let mut modules: BTreeMap<String, ContentModule> = BTreeMap::new();
        let mut root_id: Option<String> = None;
        for m in &doc.modules {
            let slot = file_order.entry(m.parent_id.as_deref()).or_insert(0);
            let ordinal = m.ordinal.unwrap_or(*slot);
            *slot += 1;

            if m.parent_id.is_none() {
                if m.kind != ModuleKind::CourseRoot {
                    return Err(CourseError::structural(&m.id, "non-root module has no parent"));
                }
                if let Some(prev) = &root_id {
                    return Err(CourseError::structural(
                        prev,
                        format!("multiple roots ('{}' also has no parent)", m.id),
                    ));
                }
                root_id = Some(m.id.clone());
            }

            modules.insert(
                m.id.clone(),
                ContentModule {
                    id: m.id.clone(),
                    kind: m.kind,
                    block_type: m.block_type.unwrap_or_default(),
                    display_name: m.display_name.clone(),
                    parent_id: m.parent_id.clone(),
                    ordinal,
                    depth: 0, // assigned below
                },
            );
        }
        let root_id = root_id.ok_or_else(|| {
            CourseError::MalformedDocument("document contains no root module".into())
        })?;

        // Resolve depths by walking parent chains; detects cycles and orphans.
        let mut depths: HashMap<String, u8> = HashMap::new();
        depths.insert(root_id.clone(), 0);
        for m in doc.modules.iter() {
            let mut chain = Vec::new();
            let mut cur = m.id.clone();
            let depth = loop {
                if let Some(&d) = depths.get(&cur) {
                    break d;
                }
                if chain.contains(&cur) {
                    return Err(CourseError::structural(&cur, "cycle in parent chain"));
                }
                chain.push(cur.clone());
                let parent = modules
                    .get(&cur)
                    .and_then(|module| module.parent_id.clone())
                    .ok_or_else(|| {
                        CourseError::structural(&cur, "parent does not resolve to any module")
                    })?;
                if !modules.contains_key(&parent) {
                    return Err(CourseError::structural(
                        &cur,
                        format!("parent '{parent}' does not exist"),
                    ));
                }
                cur = parent;
            };
            for (i, id) in chain.iter().rev().enumerate() {
                let d = depth as usize + i + 1;
                if d > 4 {
                    return Err(CourseError::structural(id, "depth exceeds 4 (five levels)"));
                }
                depths.insert(id.clone(), d as u8);
            }
        }

        for (id, module) in modules.iter_mut() {
            let depth = depths[id];
            module.depth = depth;
            if module.kind.expected_depth() != depth {
                return Err(CourseError::structural(
                    id,
                    format!(
                        "kind '{}' is inconsistent with depth {depth}",
                        module.kind.as_str()
                    ),
                ));
            }
        }

        // Child lists sorted by ordinal; sibling ordinals must be 0..n-1.
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for m in modules.values() {
            if let Some(parent) = &m.parent_id {
                children.entry(parent.clone()).or_default().push(m.id.clone());
            }
        }
        for siblings in children.values_mut() {
            siblings.sort_by_key(|id| (modules[id].ordinal, id.clone()));
            for (i, id) in siblings.iter().enumerate() {
                let ord = modules[id].ordinal;
                if ord as usize != i {
                    return Err(CourseError::structural(
                        id,
                        format!("sibling ordinals not contiguous from 0 (found {ord} at position {i})"),
                    ));
                }
            }
        }

        Ok(CourseTree {
            course_id: doc.course_id,
            title: doc.title,
            modules,
            children,
            root_id,
            week_overrides: BTreeMap::new(),
        })
    }

    /// Serialize back to the structure-document format (pre-order, ordinals
    /// explicit). `parse(serialize(t)) == t` for any valid tree.
    pub fn serialize(&self) -> String {
        let mut out = Vec::with_capacity(self.modules.len());
        self.push_subtree(&self.root_id, &mut out);
        let doc = CourseDoc {
            course_id: self.course_id.clone(),
            title: self.title.clone(),
            modules: out,
        };
        serde_json::to_string_pretty(&doc).expect("course doc serializes")
    }

    fn push_subtree(&self, id: &str, out: &mut Vec<ModuleDoc>) {
        let m = &self.modules[id];
        out.push(ModuleDoc {
            id: m.id.clone(),
            kind: m.kind,
            block_type: Some(m.block_type),
            display_name: m.display_name.clone(),
            parent_id: m.parent_id.clone(),
            ordinal: Some(m.ordinal),
        });
        if let Some(kids) = self.children.get(id) {
            for kid in kids {
                self.push_subtree(kid, out);
            }
        }
    }

    /// Attach explicit chapter -> week assignments (week 0 = supplemental).
    pub fn with_week_overrides(mut self, overrides: BTreeMap<String, u32>) -> Result<Self, CourseError> {
        for id in overrides.keys() {
            let m = self
                .modules
                .get(id)
                .ok_or_else(|| CourseError::UnknownModule(id.clone()))?;
            if m.kind != ModuleKind::Chapter {
                return Err(CourseError::structural(id, "week override targets a non-chapter"));
            }
        }
        self.week_overrides = overrides;
        Ok(self)
    }

    /// Parse a week-override CSV (`chapter_id,week`) and attach it.
    pub fn with_week_override_csv(self, contents: &str) -> Result<Self, CourseError> {
        let mut overrides = BTreeMap::new();
        for (i, line) in contents.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("chapter_id")) {
                continue;
            }
            let (id, week) = line.split_once(',').ok_or(CourseError::MalformedOverride {
                line: i + 1,
                reason: "expected chapter_id,week".into(),
            })?;
            let week: u32 = week.trim().parse().map_err(|_| CourseError::MalformedOverride {
                line: i + 1,
                reason: format!("week '{}' is not an integer", week.trim()),
            })?;
            overrides.insert(id.trim().to_string(), week);
        }
        self.with_week_overrides(overrides)
    }

    pub fn root(&self) -> &ContentModule {
        &self.modules[&self.root_id]
    }

    pub fn get(&self, id: &str) -> Option<&ContentModule> {
        self.modules.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.modules.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    /// All modules in id order.
    pub fn modules(&self) -> impl Iterator<Item = &ContentModule> {
        self.modules.values()
    }

    /// Child ids of a module, in ordinal order.
    pub fn children_of(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Chapters in ordinal order.
    pub fn chapters(&self) -> Vec<&ContentModule> {
        self.children_of(&self.root_id)
            .iter()
            .map(|id| &self.modules[id])
            .collect()
    }

    /// Depth-first leaf ordering: the one-dimensional base map of the course.
    pub fn linearize(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![self.root_id.as_str()];
        while let Some(id) = stack.pop() {
            let m = &self.modules[id];
            if m.depth == 4 {
                out.push(id.to_string());
                continue;
            }
            if let Some(kids) = self.children.get(id) {
                for kid in kids.iter().rev() {
                    stack.push(kid);
                }
            }
        }
        out
    }

    /// The chapter ancestor of a module (the module itself if it is a chapter).
    pub fn chapter_of(&self, module_id: &str) -> Result<&ContentModule, CourseError> {
        let mut m = self
            .modules
            .get(module_id)
            .ok_or_else(|| CourseError::UnknownModule(module_id.to_string()))?;
        if m.kind == ModuleKind::CourseRoot {
            return Err(CourseError::NoWeek(module_id.to_string()));
        }
        while m.kind != ModuleKind::Chapter {
            let parent = m.parent_id.as_ref().expect("non-root has parent");
            m = &self.modules[parent];
        }
        Ok(m)
    }

    /// 1-based week of a module: override for its chapter if present, else
    /// chapter ordinal + 1. Week 0 marks supplemental content.
    pub fn week_of(&self, module_id: &str) -> Result<u32, CourseError> {
        let chapter = self.chapter_of(module_id)?;
        if let Some(&week) = self.week_overrides.get(&chapter.id) {
            return Ok(week);
        }
        Ok(chapter.ordinal + 1)
    }

    /// Walk ancestors from a module up to the root, starting with the module.
    pub fn ancestry(&self, module_id: &str) -> AncestryIter<'_> {
        AncestryIter {
            tree: self,
            next: self.modules.get(module_id),
        }
    }

    /// Resolve a clickstream reference to a module id.
    ///
    /// Exact id match wins; otherwise the final `@`-separated component of a
    /// block-usage key is matched as an id suffix. An ambiguous suffix (more
    /// than one candidate) resolves to `None` rather than guessing.
    pub fn resolve_event_ref(&self, reference: &str) -> Option<&str> {
        let reference = reference.trim();
        if reference.is_empty() {
            return None;
        }
        if let Some(m) = self.modules.get(reference) {
            return Some(m.id.as_str());
        }
        let suffix = match reference.rsplit_once('@') {
            Some((_, s)) if !s.is_empty() => s,
            _ => return None,
        };
        let mut found = None;
        for id in self.modules.keys() {
            if id.ends_with(suffix) {
                if found.is_some() {
                    return None;
                }
                found = Some(id.as_str());
            }
        }
        found
    }
}

pub struct AncestryIter<'a> {
    tree: &'a CourseTree,
    next: Option<&'a ContentModule>,
}

impl<'a> Iterator for AncestryIter<'a> {
    type Item = &'a ContentModule;

    fn next(&mut self) -> Option<Self::Item> {
        let cur = self.next?;
        self.next = cur.parent_id.as_ref().and_then(|p| self.tree.get(p));
        Some(cur)
    }
}
