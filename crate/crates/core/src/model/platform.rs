use serde::{Deserialize, Serialize};

use super::ModelError;

const DEFAULT_PLATFORM: &str = include_str!("../../fixtures/platform/default.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub bram_blocks: u64,
    pub luts: u64,
    pub ffs: u64,
    pub dsps: u64,
}

/// Device constants. `s_unit` is the number of entries one BRAM block holds
/// when its port is `b_phy` bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    pub s_unit: u64,
    pub b_phy: u64,
    pub axi_max_bits: u64,
    pub dram_latency_cycles: u64,
    pub budgets: Budgets,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig::from_json(DEFAULT_PLATFORM).expect("bundled platform file is valid")
    }
}

impl PlatformConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let p: PlatformConfig =
            serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("s_unit", self.s_unit),
            ("b_phy", self.b_phy),
            ("axi_max_bits", self.axi_max_bits),
            ("budgets.bram_blocks", self.budgets.bram_blocks),
            ("budgets.luts", self.budgets.luts),
            ("budgets.ffs", self.budgets.ffs),
            ("budgets.dsps", self.budgets.dsps),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidPlatform(format!("{name} must be positive")));
        }
        if self.axi_max_bits != crate::construct::AXI_MAX_BITS {
            return Err(ModelError::InvalidPlatform(format!(
                "axi_max_bits must be {}",
                crate::construct::AXI_MAX_BITS
            )));
        }
        Ok(())
    }
}
