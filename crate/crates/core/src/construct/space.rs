use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::ConstructError;

/// Seq ranges whose maximum exceeds this are thinned to powers of two
/// above [`THIN_SEQ_TOP`].
pub const THIN_LIMIT: u64 = 4096;
pub const THIN_SEQ_TOP: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Increment {
    Seq,
    Pow2,
}

impl fmt::Display for Increment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Increment::Seq => "seq",
            Increment::Pow2 => "pow2",
        })
    }
}

/// What a tunable controls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binding {
    TileSize { pe_loop: String },
    PeCount { pe_loop: String },
    Unroll { loop_id: String },
    BitWidth { array: String },
}

/// An `auto(min, max, inc)` parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunableParam {
    pub name: String,
    pub min: u64,
    pub max: u64,
    pub inc: Increment,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub thinned: bool,
    pub binding: Binding,
}

impl TunableParam {
    pub fn new(name: impl Into<String>, min: u64, max: u64, inc: Increment, binding: Binding) -> Self {
        assert!(min >= 1 && min <= max, "auto({min},{max}) is not a valid range");
        TunableParam {
            name: name.into(),
            min,
            max,
            inc,
            thinned: inc == Increment::Seq && max > THIN_LIMIT,
            binding,
        }
    }

    /// The candidate values in increasing order.
    pub fn values(&self) -> Vec<u64> {
        let mut out = Vec::new();
        match (self.inc, self.thinned) {
            (Increment::Pow2, _) => {
                let mut v = self.min;
                while v <= self.max {
                    out.push(v);
                    v *= 2;
                }
            }
            (Increment::Seq, false) => out.extend(self.min..=self.max),
            (Increment::Seq, true) => {
                let top = self.max.min(THIN_SEQ_TOP.max(self.min));
                out.extend(self.min..=top);
                let mut p = (top + 1).next_power_of_two();
                while p <= self.max {
                    out.push(p);
                    p *= 2;
                }
                if *out.last().unwrap() != self.max {
                    out.push(self.max);
                }
            }
        }
        out
    }

    pub fn count(&self) -> u64 {
        self.values().len() as u64
    }

    pub fn contains(&self, v: u64) -> bool {
        self.values().binary_search(&v).is_ok()
    }

    /// `auto(min,max,inc)` as it appears in pragmas.
    pub fn auto_expr(&self) -> String {
        format!("auto({},{},{})", self.min, self.max, self.inc)
    }
}

/// Ordered list of tunables; a point assigns one value to each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub params: Vec<TunableParam>,
}

/// Values aligned with [`DesignSpace::params`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(pub Vec<u64>);

impl DesignSpace {
    pub fn cardinality(&self) -> BigUint {
        self.params
            .iter()
            .fold(BigUint::from(1u32), |acc, p| acc * BigUint::from(p.count()))
    }

    pub fn value_sets(&self) -> Vec<Vec<u64>> {
        self.params.iter().map(TunableParam::values).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn minimal_point(&self) -> DesignPoint {
        DesignPoint(self.params.iter().map(|p| p.min).collect())
    }

    pub fn check(&self, point: &DesignPoint) -> Result<(), ConstructError> {
        if point.0.len() != self.params.len() {
            return Err(ConstructError::PointNotInSpace(format!(
                "point has {} values, space has {} parameters",
                point.0.len(),
                self.params.len()
            )));
        }
        for (p, &v) in self.params.iter().zip(&point.0) {
            if !p.contains(v) {
                return Err(ConstructError::PointNotInSpace(format!(
                    "{} = {v} is not in {}",
                    p.name,
                    p.auto_expr()
                )));
            }
        }
        Ok(())
    }

    /// Builds a point from named values; every parameter must be present.
    pub fn point_from_named(&self, named: &BTreeMap<String, u64>) -> Result<DesignPoint, ConstructError> {
        if let Some(unknown) = named.keys().find(|k| self.index_of(k).is_none()) {
            return Err(ConstructError::PointNotInSpace(format!(
                "unknown parameter `{unknown}`"
            )));
        }
        let values = self
            .params
            .iter()
            .map(|p| {
                named.get(&p.name).copied().ok_or_else(|| {
                    ConstructError::PointNotInSpace(format!("missing value for `{}`", p.name))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let point = DesignPoint(values);
        self.check(&point)?;
        Ok(point)
    }

    pub fn named(&self, point: &DesignPoint) -> BTreeMap<String, u64> {
        self.params
            .iter()
            .zip(&point.0)
            .map(|(p, &v)| (p.name.clone(), v))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "cardinality": self.cardinality().to_string(),
        })
    }
}
