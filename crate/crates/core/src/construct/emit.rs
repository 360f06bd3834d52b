//! Renders a design as annotated C-like pseudo-source. Not compilable; it
//! documents the structure and the chosen pragma values.

use std::fmt::Write;

use super::{BitWidth, BufferRole, Capacity, CppDesign, LoopSchedule, StageKind};
use crate::kernel::{ModuleNode, Node};

fn ctype(bits: u32) -> String {
    match bits {
        8 => "char".into(),
        16 => "short".into(),
        32 => "int".into(),
        64 => "long".into(),
        b => format!("ap_uint<{b}>"),
    }
}

struct Emitter<'a> {
    design: &'a CppDesign,
    values: Option<&'a [u64]>,
    out: String,
}

impl<'a> Emitter<'a> {
    fn param(&self, idx: usize) -> String {
        match self.values {
            Some(v) => v[idx].to_string(),
            None => self.design.params[idx].auto_expr(),
        }
    }

    fn line(&mut self, indent: usize, text: &str) {
        let _ = writeln!(self.out, "{:width$}{text}", "", width = indent * 2);
    }

    fn body(&mut self, nodes: &[Node], indent: usize) {
        for n in nodes {
            match n {
                Node::Logic(id) => self.line(indent, &format!("/* {id} */ ...;")),
                Node::Module(m) => self.line(indent, &format!("{}(...);", m.id)),
                Node::Loop(l) => {
                    let tc = l
                        .trip_count
                        .map_or_else(|| format!("TC_{}", l.id), |tc| tc.to_string());
                    self.line(
                        indent,
                        &format!("{id}: for (int {id} = 0; {id} < {tc}; {id}++) {{", id = l.id),
                    );
                    let pragma = match self.design.schedule_of(&l.id) {
                        Some(LoopSchedule::Flattened { factor }) => {
                            format!("#pragma ACCEL parallel factor={factor} flatten")
                        }
                        Some(LoopSchedule::Unroll { param }) => {
                            format!("#pragma ACCEL parallel factor={}", self.param(*param))
                        }
                        Some(LoopSchedule::Pipelined) | None => "#pragma ACCEL pipeline".into(),
                    };
                    self.line(indent + 1, &pragma);
                    self.body(&l.children, indent + 2);
                    self.line(indent, "}");
                }
            }
        }
    }

    fn module_fn(&mut self, m: &ModuleNode) {
        for n in &m.children {
            self.nested_modules(n);
        }
        self.line(0, &format!("void {}(...) {{", m.id));
        let locals: Vec<_> = self
            .design
            .buffers
            .iter()
            .filter(|b| b.role == BufferRole::Local && b.owner.as_deref() == Some(&m.id))
            .collect();
        for b in locals {
            let dims: String = b.extents.iter().map(|e| format!("[{e}]")).collect();
            self.line(1, &format!("{} {}{dims};", ctype(b.element_bits), b.array));
            if let Some(v) = self.values {
                let pf = self.design.partition_factors(b, v);
                if pf.iter().any(|&f| f > 1) {
                    self.line(1, &format!("// partitioned: factors {pf:?}"));
                }
            } else {
                self.line(1, "// the array will be automatically partitioned");
            }
        }
        self.body(&m.children, 1);
        self.line(0, "}");
    }

    fn nested_modules(&mut self, n: &Node) {
        match n {
            Node::Module(m) => self.module_fn(m),
            Node::Loop(l) => {
                for c in &l.children {
                    self.nested_modules(c);
                }
            }
            Node::Logic(_) => {}
        }
    }

    fn emit(mut self) -> String {
        let d = self.design;
        let tile_name = d.params[d.tile_param].name.clone();
        let _ = writeln!(
            self.out,
            "// kernel `{}`: load/compute/store pipeline over PE loop `{}`",
            d.kernel, d.pe_loop
        );
        self.module_fn(&d.pe_template);

        let shared: Vec<_> = d.buffers.iter().filter(|b| b.role != BufferRole::Local).collect();
        let params: String = shared
            .iter()
            .map(|b| format!("{} {}[]", ctype(b.element_bits), b.array))
            .collect::<Vec<_>>()
            .join(", ");

        self.line(0, &format!("void compute({params}) {{"));
        self.line(
            1,
            &format!("for (int {pe} = 0; {pe} < {tile_name}; {pe}++) {{", pe = d.pe_loop),
        );
        if let Some(p) = d.pe_param {
            let f = self.param(p);
            self.line(1, &format!("#pragma ACCEL parallel factor={f}"));
        }
        let chunks: Vec<String> = shared
            .iter()
            .map(|b| match b.capacity {
                Capacity::PerTile(chunk) => format!("{}+{}*{chunk}", b.array, d.pe_loop),
                Capacity::Fixed(_) => b.array.clone(),
            })
            .collect();
        self.line(2, &format!("{}({});", d.pe_template.id, chunks.join(", ")));
        self.line(0, "}}");
        let loads = &d.stage(StageKind::Load).arrays;
        let stores = &d.stage(StageKind::Store).arrays;
        self.line(0, &format!("void load(...) {{ ... }} // off-chip data load: {}", loads.join(", ")));
        self.line(0, &format!("void store(...) {{ ... }} // off-chip data store: {}", stores.join(", ")));

        self.line(0, &format!("void kernel({params}) {{"));
        for b in &shared {
            if let BitWidth::Param(p) = b.bit_width {
                let f = self.param(p);
                self.line(0, &format!("#pragma ACCEL bitwidth variable={} factor={f}", b.array));
            }
        }
        match self.values {
            Some(v) => {
                let t = v[d.tile_param];
                self.line(1, &format!("const int {tile_name} = {t};"));
            }
            None => {
                let auto = d.params[d.tile_param].auto_expr();
                self.line(1, &format!("#pragma ACCEL variable={tile_name} value={auto}"));
                self.line(1, &format!("const int {tile_name};"));
            }
        }
        for b in &shared {
            let size = match b.capacity {
                Capacity::PerTile(chunk) => format!("{chunk}*{tile_name}"),
                Capacity::Fixed(n) => n.to_string(),
            };
            let ty = ctype(b.element_bits);
            self.line(
                1,
                &format!("{ty} {a}_buf_x[{size}]; {ty} {a}_buf_y[{size}];", a = b.array),
            );
        }
        if let (Some(v), Some(p)) = (self.values, d.pe_param) {
            self.line(1, &format!("// task buffers partitioned by {}", v[p]));
        } else {
            self.line(1, "// the arrays will be automatically partitioned");
            self.line(1, "// the width will be automatically adjusted");
        }
        let shared_in: Vec<_> = shared
            .iter()
            .filter(|b| b.role == BufferRole::TaskIndependent)
            .map(|b| format!("{a}_buf_x <= {a}, {a}_buf_y <= {a}", a = b.array))
            .collect();
        if !shared_in.is_empty() {
            self.line(1, &format!("load(/* {} */);", shared_in.join(", ")));
        }
        self.line(
            1,
            &format!(
                "int num_tiles = ({} + {tile_name} - 1) / {tile_name};",
                d.total_work
            ),
        );
        self.line(1, "for (int i = 0; i < num_tiles + 2; i++) {");
        for (cond, fill, drain) in [("if (i % 2 == 0) {", "_x", "_y"), ("else {", "_y", "_x")] {
            self.line(2, cond);
            let l: Vec<String> = loads.iter().map(|a| format!("{a}_buf{fill} <= {a}")).collect();
            let s: Vec<String> = stores.iter().map(|a| format!("{a}_buf{fill} => {a}")).collect();
            let compute_args: Vec<String> = shared
                .iter()
                .map(|b| match b.role {
                    BufferRole::TaskIndependent => format!("{}_buf_x", b.array),
                    _ => format!("{}_buf{drain}", b.array),
                })
                .collect();
            self.line(3, &format!("load(/* {} */);", l.join(", ")));
            self.line(3, &format!("compute({});", compute_args.join(", ")));
            self.line(3, &format!("store(/* {} */);", s.join(", ")));
            self.line(2, "}");
        }
        self.line(1, "}");
        self.line(0, "}");
        self.out
    }
}

pub(super) fn pseudo_source(design: &CppDesign, values: Option<&[u64]>) -> String {
    Emitter {
        design,
        values,
        out: String::new(),
    }
    .emit()
}
