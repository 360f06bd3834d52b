//! Kernel descriptions: the structured input format and its validation.
//!
//! A kernel is a single loop nest over a set of arrays. The document is JSON
//! (see `docs/kernel-format.md` in the repository root for the full schema):
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "name": "vadd",
//!   "scalars": [{ "name": "N", "value": 1024 }],
//!   "arrays": [{ "id": "a", "element_bits": 32, "dims": ["N"], "location": "off_chip" }],
//!   "top_loop": {
//!     "id": "i", "trip_count": "N",
//!     "accesses": [{ "array": "a", "dims": [{ "iter": "i", "coeff": 1, "offset": 0 }] }],
//!     "body": [{ "stmt": { "id": "add" } }]
//!   }
//! }
//! ```

mod hierarchy;

pub use hierarchy::{
    build_hierarchy, walk, AccessRef, ArchHierarchy, BufferNode, LoopNode, ModuleNode, Node,
    NodeRef, Subscript,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("duplicate {kind} identifier `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("array `{array}` has a nonpositive extent in dimension {dim}")]
    NonPositiveExtent { array: String, dim: usize },
    #[error("multiple top-level loops")]
    MultipleTopLevelLoops,
    #[error("invalid kernel: {0}")]
    Invalid(String),
}

/// An integer that is either a literal or a reference to a named scalar.
/// The reserved symbol `dynamic` marks a value only known at run time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntExpr {
    Lit(i64),
    Sym(String),
}

impl IntExpr {
    pub const DYNAMIC: &'static str = "dynamic";

    pub fn dynamic() -> Self {
        IntExpr::Sym(Self::DYNAMIC.to_string())
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, IntExpr::Sym(s) if s == Self::DYNAMIC)
    }
}

impl From<i64> for IntExpr {
    fn from(v: i64) -> Self {
        IntExpr::Lit(v)
    }
}

impl fmt::Display for IntExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntExpr::Lit(v) => write!(f, "{v}"),
            IntExpr::Sym(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarDecl {
    pub name: String,
    /// `None` for scalars that are kernel arguments without a static value.
    #[serde(default)]
    pub value: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    OffChip,
    OnChip,
}

/// Which way an off-chip array moves relative to the accelerator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    In,
    Out,
    Inout,
}

impl Direction {
    pub fn is_loaded(self) -> bool {
        matches!(self, Direction::In | Direction::Inout)
    }

    pub fn is_stored(self) -> bool {
        matches!(self, Direction::Out | Direction::Inout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub id: String,
    pub element_bits: u32,
    pub dims: Vec<IntExpr>,
    pub location: Location,
    #[serde(default)]
    pub direction: Direction,
    /// Module that owns an on-chip array; the kernel itself when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrregularTag {
    Irregular,
}

/// One subscript of an array access: `coeff * iter + offset`, or an
/// expression outside that form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AccessDim {
    Affine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iter: Option<String>,
        #[serde(default = "one")]
        coeff: IntExpr,
        #[serde(default = "zero")]
        offset: IntExpr,
    },
    Irregular(IrregularTag),
}

fn one() -> IntExpr {
    IntExpr::Lit(1)
}

fn zero() -> IntExpr {
    IntExpr::Lit(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineAccess {
    pub array: String,
    pub dims: Vec<AccessDim>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopDecl {
    pub id: String,
    pub trip_count: IntExpr,
    #[serde(default)]
    pub carried_dependency: bool,
    #[serde(default)]
    pub accesses: Vec<AffineAccess>,
    #[serde(default)]
    pub body: Vec<BodyItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StmtBlock {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleCall {
    pub module: String,
    #[serde(default)]
    pub body: Vec<BodyItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyItem {
    Loop(LoopDecl),
    Stmt(StmtBlock),
    Call(ModuleCall),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KernelSpec {
    pub format_version: u32,
    pub name: String,
    pub scalars: Vec<ScalarDecl>,
    pub arrays: Vec<ArrayDecl>,
    pub top_loop: LoopDecl,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TopLoops {
    One(LoopDecl),
    Many(Vec<LoopDecl>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    format_version: u32,
    name: String,
    #[serde(default)]
    scalars: Vec<ScalarDecl>,
    #[serde(default)]
    arrays: Vec<ArrayDecl>,
    top_loop: TopLoops,
}

/// Parses and validates a kernel-description document.
pub fn parse_kernel_spec(text: &str) -> Result<KernelSpec, KernelError> {
    let raw: RawKernel = serde_json::from_str(text).map_err(|e| {
        if e.to_string().contains("duplicate field `top_loop`") {
            KernelError::MultipleTopLevelLoops
        } else {
            KernelError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            }
        }
    })?;
    if raw.format_version != FORMAT_VERSION {
        return Err(KernelError::UnsupportedVersion(raw.format_version));
    }
    let top_loop = match raw.top_loop {
        TopLoops::One(l) => l,
        TopLoops::Many(mut v) if v.len() == 1 => v.remove(0),
        TopLoops::Many(v) if v.is_empty() => {
            return Err(KernelError::Invalid("kernel has no top-level loop".into()))
        }
        TopLoops::Many(_) => return Err(KernelError::MultipleTopLevelLoops),
    };
    let spec = KernelSpec {
        format_version: raw.format_version,
        name: raw.name,
        scalars: raw.scalars,
        arrays: raw.arrays,
        top_loop,
    };
    spec.validate()?;
    Ok(spec)
}

impl KernelSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel spec serializes")
    }

    pub fn scalar(&self, name: &str) -> Option<&ScalarDecl> {
        self.scalars.iter().find(|s| s.name == name)
    }

    pub fn array(&self, id: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| a.id == id)
    }

    /// Resolves an integer expression; `None` means the value is dynamic.
    pub fn resolve(&self, e: &IntExpr) -> Option<i64> {
        match e {
            IntExpr::Lit(v) => Some(*v),
            IntExpr::Sym(s) if s == IntExpr::DYNAMIC => None,
            IntExpr::Sym(s) => self.scalar(s).and_then(|d| d.value),
        }
    }

    /// Module ids introduced by calls anywhere in the nest.
    pub fn module_ids(&self) -> Vec<String> {
        fn collect(items: &[BodyItem], out: &mut Vec<String>) {
            for item in items {
                match item {
                    BodyItem::Loop(l) => collect(&l.body, out),
                    BodyItem::Call(c) => {
                        out.push(c.module.clone());
                        collect(&c.body, out);
                    }
                    BodyItem::Stmt(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.top_loop.body, &mut out);
        out
    }

    pub fn loops(&self) -> Vec<&LoopDecl> {
        fn collect<'a>(l: &'a LoopDecl, out: &mut Vec<&'a LoopDecl>) {
            out.push(l);
            collect_items(&l.body, out);
        }
        fn collect_items<'a>(items: &'a [BodyItem], out: &mut Vec<&'a LoopDecl>) {
            for item in items {
                match item {
                    BodyItem::Loop(l) => collect(l, out),
                    BodyItem::Call(c) => collect_items(&c.body, out),
                    BodyItem::Stmt(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.top_loop, &mut out);
        out
    }

    fn validate(&self) -> Result<(), KernelError> {
        if self.name.is_empty() {
            return Err(KernelError::Invalid("kernel name is empty".into()));
        }

        let mut scalars = BTreeSet::new();
        for s in &self.scalars {
            if s.name == IntExpr::DYNAMIC {
                return Err(KernelError::Invalid("`dynamic` is a reserved name".into()));
            }
            if !scalars.insert(s.name.as_str()) {
                return Err(dup("scalar", &s.name));
            }
        }

        let check_sym = |e: &IntExpr, what: &str| -> Result<(), KernelError> {
            match e {
                IntExpr::Sym(s) if s != IntExpr::DYNAMIC && !scalars.contains(s.as_str()) => Err(
                    KernelError::Invalid(format!("{what} refers to undeclared scalar `{s}`")),
                ),
                _ => Ok(()),
            }
        };

        let mut modules = BTreeSet::new();
        modules.insert(self.name.as_str());
        let module_ids = self.module_ids();
        for m in &module_ids {
            if !modules.insert(m.as_str()) {
                return Err(dup("module", m));
            }
        }

        let mut arrays = BTreeSet::new();
        for a in &self.arrays {
            if !arrays.insert(a.id.as_str()) {
                return Err(dup("array", &a.id));
            }
            if !(1..=64).contains(&a.element_bits) {
                return Err(KernelError::Invalid(format!(
                    "array `{}` has element_bits {} outside 1..=64",
                    a.id, a.element_bits
                )));
            }
            if a.dims.is_empty() {
                return Err(KernelError::Invalid(format!("array `{}` has no dimensions", a.id)));
            }
            for (d, extent) in a.dims.iter().enumerate() {
                check_sym(extent, &format!("extent of `{}`", a.id))?;
                if let Some(v) = self.resolve(extent) {
                    if v <= 0 {
                        return Err(KernelError::NonPositiveExtent {
                            array: a.id.clone(),
                            dim: d,
                        });
                    }
                }
            }
            if let Some(scope) = &a.scope {
                if a.location == Location::OffChip {
                    return Err(KernelError::Invalid(format!(
                        "off-chip array `{}` cannot be scoped to a module",
                        a.id
                    )));
                }
                if !modules.contains(scope.as_str()) {
                    return Err(KernelError::Invalid(format!(
                        "array `{}` is scoped to unknown module `{scope}`",
                        a.id
                    )));
                }
            }
        }

        let loops = self.loops();
        let mut loop_ids = BTreeSet::new();
        for l in &loops {
            if !loop_ids.insert(l.id.as_str()) {
                return Err(dup("loop", &l.id));
            }
        }
        let mut stmt_ids = BTreeSet::new();
        self.check_stmts(&self.top_loop.body, &mut stmt_ids)?;

        for l in &loops {
            check_sym(&l.trip_count, &format!("trip count of loop `{}`", l.id))?;
            if let Some(tc) = self.resolve(&l.trip_count) {
                if tc <= 0 {
                    return Err(KernelError::Invalid(format!(
                        "loop `{}` has nonpositive trip count {tc}",
                        l.id
                    )));
                }
            }
            for acc in &l.accesses {
                let decl = self.array(&acc.array).ok_or_else(|| {
                    KernelError::Invalid(format!(
                        "loop `{}` accesses undeclared array `{}`",
                        l.id, acc.array
                    ))
                })?;
                if acc.dims.len() != decl.dims.len() {
                    return Err(KernelError::Invalid(format!(
                        "access to `{}` in loop `{}` has {} subscripts, array has {} dimensions",
                        acc.array,
                        l.id,
                        acc.dims.len(),
                        decl.dims.len()
                    )));
                }
                for dim in &acc.dims {
                    if let AccessDim::Affine {
                        iter,
                        coeff,
                        offset,
                    } = dim
                    {
                        check_sym(coeff, "access coefficient")?;
                        check_sym(offset, "access offset")?;
                        if let Some(it) = iter {
                            if !loop_ids.contains(it.as_str()) {
                                return Err(KernelError::Invalid(format!(
                                    "access to `{}` uses unknown iterator `{it}`",
                                    acc.array
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_stmts<'a>(
        &'a self,
        items: &'a [BodyItem],
        seen: &mut BTreeSet<&'a str>,
    ) -> Result<(), KernelError> {
        for item in items {
            match item {
                BodyItem::Stmt(s) => {
                    if !seen.insert(s.id.as_str()) {
                        return Err(dup("statement", &s.id));
                    }
                }
                BodyItem::Loop(l) => self.check_stmts(&l.body, seen)?,
                BodyItem::Call(c) => self.check_stmts(&c.body, seen)?,
            }
        }
        Ok(())
    }

    /// Resolved trip count of every loop; `None` for dynamic ones.
    pub fn trip_counts(&self) -> BTreeMap<String, Option<i64>> {
        self.loops()
            .into_iter()
            .map(|l| (l.id.clone(), self.resolve(&l.trip_count)))
            .collect()
    }
}

fn dup(kind: &'static str, id: &str) -> KernelError {
    KernelError::DuplicateId {
        kind,
        id: id.to_string(),
    }
}
