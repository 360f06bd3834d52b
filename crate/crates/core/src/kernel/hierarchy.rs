use serde::Serialize;

use super::{AccessDim, BodyItem, Direction, KernelSpec, Location, LoopDecl};

/// Tree of modules, loops and buffers consumed by every later stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArchHierarchy {
    pub root: ModuleNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleNode {
    pub id: String,
    pub children: Vec<Node>,
    pub buffers: Vec<BufferNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Loop(LoopNode),
    Module(ModuleNode),
    /// Opaque statement block; its cost only comes from report constants.
    Logic(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoopNode {
    pub id: String,
    /// `None` when the trip count is dynamic.
    pub trip_count: Option<u64>,
    pub carried_dependency: bool,
    pub accesses: Vec<AccessRef>,
    pub children: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessRef {
    pub array: String,
    pub dims: Vec<Subscript>,
}

/// A resolved subscript. `None` coefficients or offsets are runtime values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subscript {
    Affine {
        iter: Option<String>,
        coeff: Option<i64>,
        offset: Option<i64>,
    },
    Irregular,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BufferNode {
    pub array: String,
    pub element_bits: u32,
    /// `None` for extents that are not statically known.
    pub extents: Vec<Option<u64>>,
    pub location: Location,
    pub direction: Direction,
}

impl BufferNode {
    /// Total element count, if every extent is known.
    pub fn elems(&self) -> Option<u64> {
        self.extents.iter().try_fold(1u64, |acc, e| e.map(|v| acc * v))
    }

    /// Elements spanned by one step of dimension `d` (product of the
    /// extents after it).
    pub fn stride(&self, d: usize) -> Option<u64> {
        self.extents[d + 1..]
            .iter()
            .try_fold(1u64, |acc, e| e.map(|v| acc * v))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Module(&'a ModuleNode),
    Loop(&'a LoopNode),
}

impl<'a> NodeRef<'a> {
    pub fn id(&self) -> &'a str {
        match self {
            NodeRef::Module(m) => &m.id,
            NodeRef::Loop(l) => &l.id,
        }
    }

    pub fn children(&self) -> &'a [Node] {
        match self {
            NodeRef::Module(m) => &m.children,
            NodeRef::Loop(l) => &l.children,
        }
    }
}

pub fn build_hierarchy(spec: &KernelSpec) -> ArchHierarchy {
    let buffers_for = |scope: &str| -> Vec<BufferNode> {
        spec.arrays
            .iter()
            .filter(|a| match a.location {
                Location::OffChip => scope == spec.name,
                Location::OnChip => a.scope.as_deref().unwrap_or(&spec.name) == scope,
            })
            .map(|a| BufferNode {
                array: a.id.clone(),
                element_bits: a.element_bits,
                extents: a
                    .dims
                    .iter()
                    .map(|d| spec.resolve(d).map(|v| v as u64))
                    .collect(),
                location: a.location,
                direction: a.direction,
            })
            .collect()
    };

    fn convert_loop(
        spec: &KernelSpec,
        l: &LoopDecl,
        buffers_for: &dyn Fn(&str) -> Vec<BufferNode>,
    ) -> LoopNode {
        LoopNode {
            id: l.id.clone(),
            trip_count: spec.resolve(&l.trip_count).map(|v| v as u64),
            carried_dependency: l.carried_dependency,
            accesses: l
                .accesses
                .iter()
                .map(|a| AccessRef {
                    array: a.array.clone(),
                    dims: a
                        .dims
                        .iter()
                        .map(|d| match d {
                            AccessDim::Affine {
                                iter,
                                coeff,
                                offset,
                            } => Subscript::Affine {
                                iter: iter.clone(),
                                coeff: spec.resolve(coeff),
                                offset: spec.resolve(offset),
                            },
                            AccessDim::Irregular(_) => Subscript::Irregular,
                        })
                        .collect(),
                })
                .collect(),
            children: convert_items(spec, &l.body, buffers_for),
        }
    }

    fn convert_items(
        spec: &KernelSpec,
        items: &[BodyItem],
        buffers_for: &dyn Fn(&str) -> Vec<BufferNode>,
    ) -> Vec<Node> {
        items
            .iter()
            .map(|item| match item {
                BodyItem::Loop(l) => Node::Loop(convert_loop(spec, l, buffers_for)),
                BodyItem::Stmt(s) => Node::Logic(s.id.clone()),
                BodyItem::Call(c) => Node::Module(ModuleNode {
                    id: c.module.clone(),
                    children: convert_items(spec, &c.body, buffers_for),
                    buffers: buffers_for(&c.module),
                }),
            })
            .collect()
    }

    ArchHierarchy {
        root: ModuleNode {
            id: spec.name.clone(),
            children: vec![Node::Loop(convert_loop(spec, &spec.top_loop, &buffers_for))],
            buffers: buffers_for(&spec.name),
        },
    }
}

/// Deterministic pre-order traversal over modules and loops. Statement
/// blocks are not visited. The visitor receives each node and its depth.
pub fn walk<'a>(h: &'a ArchHierarchy, mut visitor: impl FnMut(NodeRef<'a>, usize)) {
    fn go<'a>(node: NodeRef<'a>, depth: usize, visitor: &mut dyn FnMut(NodeRef<'a>, usize)) {
        visitor(node, depth);
        for child in node.children() {
            match child {
                Node::Loop(l) => go(NodeRef::Loop(l), depth + 1, visitor),
                Node::Module(m) => go(NodeRef::Module(m), depth + 1, visitor),
                Node::Logic(_) => {}
            }
        }
    }
    go(NodeRef::Module(&h.root), 0, &mut visitor);
}

impl ArchHierarchy {
    pub fn visit_order(&self) -> Vec<String> {
        let mut out = Vec::new();
        walk(self, |n, _| out.push(n.id().to_string()));
        out
    }

    pub fn loops(&self) -> Vec<&LoopNode> {
        let mut out = Vec::new();
        walk(self, |n, _| {
            if let NodeRef::Loop(l) = n {
                out.push(l);
            }
        });
        out
    }

    pub fn modules(&self) -> Vec<&ModuleNode> {
        let mut out = Vec::new();
        walk(self, |n, _| {
            if let NodeRef::Module(m) = n {
                out.push(m);
            }
        });
        out
    }

    pub fn buffers(&self) -> Vec<&BufferNode> {
        self.modules().into_iter().flat_map(|m| &m.buffers).collect()
    }

    pub fn buffer(&self, array: &str) -> Option<&BufferNode> {
        self.buffers().into_iter().find(|b| b.array == array)
    }

    pub fn find_loop(&self, id: &str) -> Option<&LoopNode> {
        self.loops().into_iter().find(|l| l.id == id)
    }

    pub fn top_loop(&self) -> &LoopNode {
        match self.root.children.first() {
            Some(Node::Loop(l)) => l,
            _ => unreachable!("root always wraps the top loop"),
        }
    }

    /// Loops from the top of the nest down to `id`, inclusive.
    pub fn loop_path(&self, id: &str) -> Option<Vec<&LoopNode>> {
        fn search<'a>(nodes: &'a [Node], id: &str, path: &mut Vec<&'a LoopNode>) -> bool {
            for n in nodes {
                match n {
                    Node::Loop(l) => {
                        path.push(l);
                        if l.id == id || search(&l.children, id, path) {
                            return true;
                        }
                        path.pop();
                    }
                    Node::Module(m) => {
                        if search(&m.children, id, path) {
                            return true;
                        }
                    }
                    Node::Logic(_) => {}
                }
            }
            false
        }
        let mut path = Vec::new();
        search(&self.root.children, id, &mut path).then_some(path)
    }

    /// True when every loop above `id` has that path as its only child, so
    /// the enclosing loops can be folded into one task stream.
    pub fn on_perfect_spine(&self, id: &str) -> bool {
        let mut cur = self.top_loop();
        loop {
            if cur.id == id {
                return true;
            }
            match cur.children.as_slice() {
                [Node::Loop(next)] => cur = next,
                _ => return false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::parse_kernel_spec;

    fn nw_like() -> KernelSpec {
        parse_kernel_spec(
            r#"{"format_version": 1, "name": "nw",
            "scalars": [{"name": "NUM_PAIRS", "value": 64}],
            "arrays": [
                {"id": "seqA", "element_bits": 8, "dims": [8192], "location": "off_chip"},
                {"id": "M", "element_bits": 32, "dims": [129, 129], "location": "on_chip", "scope": "engine"}
            ],
            "top_loop": {"id": "pairs", "trip_count": "NUM_PAIRS",
                "accesses": [{"array": "seqA", "dims": [{"iter": "pairs", "coeff": 128}]}],
                "body": [{"call": {"module": "engine", "body": [
                    {"loop": {"id": "loop1", "trip_count": 129}},
                    {"loop": {"id": "loop2", "trip_count": 129}},
                    {"loop": {"id": "loop3", "trip_count": 129, "carried_dependency": true,
                        "body": [{"loop": {"id": "loop3_inner", "trip_count": 129}}]}}
                ]}}]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn nw_visit_order() {
        let h = build_hierarchy(&nw_like());
        assert_eq!(
            h.visit_order(),
            ["nw", "pairs", "engine", "loop1", "loop2", "loop3", "loop3_inner"]
        );
        assert_eq!(h.visit_order(), h.visit_order());
    }

    #[test]
    fn buffers_land_in_their_scope() {
        let h = build_hierarchy(&nw_like());
        assert_eq!(h.root.buffers.len(), 1);
        assert_eq!(h.buffers().len(), 2);
        let m = h.buffer("M").unwrap();
        assert_eq!(m.elems(), Some(129 * 129));
        assert_eq!(m.stride(0), Some(129));
    }

    #[test]
    fn loop_paths_and_spine() {
        let h = build_hierarchy(&nw_like());
        let path: Vec<_> = h
            .loop_path("loop3_inner")
            .unwrap()
            .iter()
            .map(|l| l.id.as_str())
            .collect();
        assert_eq!(path, ["pairs", "loop3", "loop3_inner"]);
        assert!(h.on_perfect_spine("pairs"));
        assert!(!h.on_perfect_spine("loop1"));
        assert!(h.loop_path("nope").is_none());
    }

    #[test]
    fn empty_body_module() {
        let k = parse_kernel_spec(
            r#"{"format_version": 1, "name": "k", "top_loop": {"id": "i", "trip_count": 4}}"#,
        )
        .unwrap();
        let h = build_hierarchy(&k);
        assert_eq!(h.visit_order(), ["k", "i"]);
    }
}
