use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::kernel::ArchHierarchy;

/// Resource usage sampled from one synthesis run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSample {
    #[serde(default)]
    pub lut: u64,
    #[serde(default)]
    pub ff: u64,
    #[serde(default)]
    pub dsp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnrollSample {
    pub uf: u64,
    #[serde(flatten)]
    pub usage: ResourceSample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopReport {
    pub ii: u64,
    /// Required when the kernel leaves the trip count dynamic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tc: Option<u64>,
    /// Cycles of the standalone logic in one iteration.
    pub c_r: u64,
    /// Usage at two consecutive unroll factors.
    pub samples: Vec<UnrollSample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub c_r: u64,
    #[serde(flatten)]
    pub usage: ResourceSample,
}

/// Per-block buffer logic costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub r_ctrl: u64,
    pub r_data: u64,
    /// Flip-flops per buffer on top of its port width.
    pub r_ff: u64,
}

/// Constants measured by synthesis, keyed by loop and module id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthReport {
    pub format_version: u32,
    pub kernel: String,
    #[serde(default)]
    pub loops: BTreeMap<String, LoopReport>,
    #[serde(default)]
    pub modules: BTreeMap<String, ModuleReport>,
    pub memory: MemoryReport,
    /// Per-array overrides of `memory`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub arrays: BTreeMap<String, MemoryReport>,
}

impl SynthReport {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Loop constants after initialization. Resource fields are the per
/// iteration increments of the standalone logic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoopConstants {
    pub ii: u64,
    pub tc: u64,
    pub c_r: u64,
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModuleConstants {
    pub c_r: u64,
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelConstants {
    pub loops: BTreeMap<String, LoopConstants>,
    pub modules: BTreeMap<String, ModuleConstants>,
    pub memory: MemoryReport,
    pub memory_overrides: BTreeMap<String, MemoryReport>,
    /// Clamped negative increments and similar oddities.
    pub warnings: Vec<String>,
}

impl ModelConstants {
    pub fn loop_constants(&self, id: &str) -> Result<&LoopConstants, ModelError> {
        self.loops
            .get(id)
            .ok_or_else(|| ModelError::ReportIncomplete(format!("no entry for loop `{id}`")))
    }

    pub fn module_constants(&self, id: &str) -> Result<&ModuleConstants, ModelError> {
        self.modules
            .get(id)
            .ok_or_else(|| ModelError::ReportIncomplete(format!("no entry for module `{id}`")))
    }

    pub fn memory_for(&self, array: &str) -> MemoryReport {
        self.memory_overrides.get(array).copied().unwrap_or(self.memory)
    }
}

/// Derives model constants from a report. Standalone loop logic is the
/// difference between the two samples taken at consecutive unroll factors.
pub fn init_model(report: &SynthReport, h: &ArchHierarchy) -> Result<ModelConstants, ModelError> {
    if report.kernel != h.root.id {
        return Err(ModelError::InvalidReport(format!(
            "report is for kernel `{}`, not `{}`",
            report.kernel, h.root.id
        )));
    }
    let mut warnings = Vec::new();
    let mut loops = BTreeMap::new();
    for l in h.loops() {
        let r = report
            .loops
            .get(&l.id)
            .ok_or_else(|| ModelError::ReportIncomplete(format!("no entry for loop `{}`", l.id)))?;
        if r.ii == 0 {
            return Err(ModelError::InvalidReport(format!(
                "loop `{}` has initiation interval 0",
                l.id
            )));
        }
        let tc = match (l.trip_count, r.tc) {
            (Some(a), Some(b)) if a != b => {
                return Err(ModelError::InvalidReport(format!(
                    "loop `{}` trip count {b} differs from the kernel's {a}",
                    l.id
                )))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(ModelError::ReportIncomplete(format!(
                    "trip count of dynamic loop `{}`",
                    l.id
                )))
            }
        };
        let [lo, hi] = match r.samples.as_slice() {
            [a, b] if b.uf == a.uf + 1 => [a, b],
            _ => return Err(ModelError::NonConsecutiveSamples(l.id.clone())),
        };
        let mut delta = |what: &str, a: u64, b: u64| -> u64 {
            if b < a {
                warnings.push(format!(
                    "loop `{}`: {what} decreases from {a} to {b} between UF={} and UF={}; using 0",
                    l.id, lo.uf, hi.uf
                ));
                0
            } else {
                b - a
            }
        };
        let lut = delta("LUT", lo.usage.lut, hi.usage.lut);
        let ff = delta("FF", lo.usage.ff, hi.usage.ff);
        let dsp = delta("DSP", lo.usage.dsp, hi.usage.dsp);
        loops.insert(
            l.id.clone(),
            LoopConstants {
                ii: r.ii,
                tc,
                c_r: r.c_r,
                lut,
                ff,
                dsp,
            },
        );
    }

    let mut modules = BTreeMap::new();
    for m in h.modules() {
        let r = report
            .modules
            .get(&m.id)
            .ok_or_else(|| ModelError::ReportIncomplete(format!("no entry for module `{}`", m.id)))?;
        modules.insert(
            m.id.clone(),
            ModuleConstants {
                c_r: r.c_r,
                lut: r.usage.lut,
                ff: r.usage.ff,
                dsp: r.usage.dsp,
            },
        );
    }

    Ok(ModelConstants {
        loops,
        modules,
        memory: report.memory,
        memory_overrides: report.arrays.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_hierarchy, parse_kernel_spec};

    fn hierarchy() -> ArchHierarchy {
        build_hierarchy(
            &parse_kernel_spec(
                r#"{"format_version": 1, "name": "k",
                "top_loop": {"id": "i", "trip_count": 8,
                    "body": [{"call": {"module": "engine", "body": [{"loop": {"id": "j", "trip_count": "dynamic"}}]}}]}}"#,
            )
            .unwrap(),
        )
    }

    fn report(samples: &str) -> SynthReport {
        SynthReport::from_json(&format!(
            r#"{{"format_version": 1, "kernel": "k",
            "loops": {{
                "i": {{"ii": 1, "c_r": 2, "samples": {samples}}},
                "j": {{"ii": 1, "tc": 32, "c_r": 1, "samples": [{{"uf": 1, "lut": 10}}, {{"uf": 2, "lut": 15}}]}}
            }},
            "modules": {{"k": {{"c_r": 3, "lut": 100}}, "engine": {{"c_r": 4, "lut": 50}}}},
            "memory": {{"r_ctrl": 10, "r_data": 5, "r_ff": 8}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn increment_is_sample_difference() {
        let c = init_model(
            &report(r#"[{"uf": 1, "lut": 500, "ff": 40}, {"uf": 2, "lut": 620, "ff": 70}]"#),
            &hierarchy(),
        )
        .unwrap();
        assert_eq!(c.loops["i"].lut, 120);
        assert_eq!(c.loops["i"].ff, 30);
        assert_eq!(c.loops["j"].tc, 32);
        assert_eq!(c.modules["engine"].c_r, 4);
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn negative_increment_clamps_with_warning() {
        let c = init_model(
            &report(r#"[{"uf": 1, "lut": 620}, {"uf": 2, "lut": 500}]"#),
            &hierarchy(),
        )
        .unwrap();
        assert_eq!(c.loops["i"].lut, 0);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn non_consecutive_samples_rejected() {
        let err = init_model(
            &report(r#"[{"uf": 1, "lut": 500}, {"uf": 4, "lut": 620}]"#),
            &hierarchy(),
        )
        .unwrap_err();
        assert_eq!(err, ModelError::NonConsecutiveSamples("i".into()));
    }

    #[test]
    fn missing_module_is_incomplete() {
        let mut r = report(r#"[{"uf": 1}, {"uf": 2}]"#);
        r.modules.remove("engine");
        assert!(matches!(
            init_model(&r, &hierarchy()),
            Err(ModelError::ReportIncomplete(_))
        ));
    }

    #[test]
    fn trip_count_mismatch_rejected() {
        let mut r = report(r#"[{"uf": 1}, {"uf": 2}]"#);
        r.loops.get_mut("i").unwrap().tc = Some(9);
        assert!(matches!(
            init_model(&r, &hierarchy()),
            Err(ModelError::InvalidReport(_))
        ));
    }
}
