//! Scenario documents: converter, modulator, simulation options, optional sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{ConverterConfig, DeviceParams, DropTable, LinkParams, ModuleParams};
use crate::error::{Error, Result};
use crate::modulation::ModulatorConfig;
use crate::sim::SimOptions;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub r_loop: f64,
    pub l_loop: f64,
    /// Lumped loop drop; defaults to `n_loop_diodes` device drops.
    #[serde(default)]
    pub v_d_loop: Option<f64>,
    #[serde(default = "default_loop_diodes")]
    pub n_loop_diodes: u32,
}

fn default_loop_diodes() -> u32 {
    LinkParams::DEFAULT_LOOP_DIODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerModule<T> {
    Each(Vec<T>),
    All(T),
}

impl<T: Clone> PerModule<T> {
    fn expand(&self, n: usize) -> Vec<T> {
        match self {
            PerModule::Each(v) => v.clone(),
            PerModule::All(x) => vec![x.clone(); n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSpec {
    pub n_modules: usize,
    pub modules: PerModule<ModuleParams>,
    pub links: PerModule<LinkSpec>,
    pub supply_index: usize,
    pub v_supply: f64,
    pub r_load: f64,
    pub f_out: f64,
    pub modulation_index: f64,
    pub f_carrier: f64,
    #[serde(default)]
    pub drop_table: Option<DropTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values { values: Vec<f64> },
    Range { from: f64, to: f64, points: usize, scale: Scale },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::Values { values } => values.clone(),
            Grid::Range { from, to, points, scale } => {
                let n = *points;
                if n == 1 {
                    return vec![*from];
                }
                (0..n)
                    .map(|i| {
                        let u = i as f64 / (n - 1) as f64;
                        match scale {
                            Scale::Linear => from + u * (to - from),
                            Scale::Log => (from.ln() + u * (to.ln() - from.ln())).exp(),
                        }
                    })
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Grid::Range { from, to, scale: Scale::Log, .. } = self {
            if !(*from > 0.0 && *to > 0.0) {
                return Err(Error::invalid("sweep.grid", "log grid bounds must be > 0"));
            }
        }
        let pts = self.points();
        if pts.is_empty() {
            return Err(Error::invalid("sweep.grid", "must not be empty"));
        }
        if pts.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("sweep.grid", "values must be finite"));
        }
        let up = pts.windows(2).all(|w| w[1] > w[0]);
        let down = pts.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::invalid("sweep.grid", "must be strictly monotone"));
        }
        Ok(())
    }
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Closed-form loop sweep over inductance.
    #[serde(rename = "link.l_loop")]
    LoopInductance,
    #[serde(rename = "converter.supply_index")]
    SupplyIndex,
    #[serde(rename = "converter.f_carrier")]
    CarrierFrequency,
    #[serde(rename = "converter.n_modules")]
    ModuleCount,
    #[serde(rename = "link.v_d_loop")]
    LoopDrop,
    #[serde(rename = "link.r_loop")]
    LoopResistance,
    #[serde(rename = "converter.modulation_index")]
    ModulationIndex,
}

/// Two-point fit of the switching energy before a carrier sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    /// `(f_carrier, efficiency)` targets.
    pub targets: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Grid,
    /// Initial difference for the closed-form inductance sweep (V).
    #[serde(default)]
    pub delta_v0: Option<f64>,
    #[serde(default)]
    pub calibrate: Option<Calibration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Waveforms,
    Profile,
    Spectrum,
    Losses,
    Summary,
    Traces,
    Commands,
}

pub fn default_artifacts() -> Vec<Artifact> {
    vec![
        Artifact::Waveforms,
        Artifact::Profile,
        Artifact::Spectrum,
        Artifact::Losses,
        Artifact::Summary,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulatorSpec {
    #[serde(default)]
    pub carrier_phases: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub converter: ConverterSpec,
    #[serde(default)]
    pub modulator: Option<ModulatorSpec>,
    #[serde(default)]
    pub simulation: SimOptions,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_artifacts")]
    pub outputs: Vec<Artifact>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        let cfg = self.converter_config()?;
        cfg.validate()?;
        self.modulator_config(&cfg).validate()?;
        if self.simulation.periods == 0 {
            return Err(Error::invalid("simulation.periods", "must be at least 1"));
        }
        if !(self.simulation.e_sw >= 0.0) {
            return Err(Error::invalid("simulation.e_sw", "must be >= 0"));
        }
        if let Some(sweep) = &self.sweep {
            sweep.grid.validate()?;
            if let Some(cal) = &sweep.calibrate {
                if cal.targets.is_empty() {
                    return Err(Error::invalid("sweep.calibrate.targets", "must not be empty"));
                }
                if cal.targets.iter().any(|(f, e)| !(*f > 0.0) || !(*e > 0.0 && *e < 1.0)) {
                    return Err(Error::invalid(
                        "sweep.calibrate.targets",
                        "frequencies must be > 0 and efficiencies in (0, 1)",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn converter_config(&self) -> Result<ConverterConfig> {
        let c = &self.converter;
        let modules = c.modules.expand(c.n_modules);
        let link_specs = c.links.expand(c.n_modules.saturating_sub(1));
        let links = link_specs
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let devices: DeviceParams = modules.get(j).map(|m| m.devices).ok_or_else(|| {
                    Error::invalid("converter.modules", "fewer entries than links require")
                })?;
                let mut p = LinkParams::from_devices(l.r_loop, l.l_loop, l.n_loop_diodes, &devices);
                if let Some(v) = l.v_d_loop {
                    p.v_d_loop = v;
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConverterConfig {
            n_modules: c.n_modules,
            modules,
            links,
            supply_index: c.supply_index,
            v_supply: c.v_supply,
            r_load: c.r_load,
            f_out: c.f_out,
            modulation_index: c.modulation_index,
            f_carrier: c.f_carrier,
            drop_table: c.drop_table.clone().unwrap_or_default(),
        })
    }

    pub fn modulator_config(&self, cfg: &ConverterConfig) -> ModulatorConfig {
        let mut m = ModulatorConfig::from_converter(cfg);
        if let Some(phases) = self.modulator.as_ref().and_then(|m| m.carrier_phases.clone()) {
            m.carrier_phases = phases;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema_version": 1,
        "name": "t",
        "converter": {
            "n_modules": 3,
            "modules": {"capacitance": 0.015, "v_init": 35.0, "devices": {"r_ds_on": 0.008, "v_d": 1.2}},
            "links": {"r_loop": 0.02, "l_loop": 5e-8},
            "supply_index": 1, "v_supply": 35.0, "r_load": 200.0,
            "f_out": 60.0, "modulation_index": 0.9, "f_carrier": 10000.0
        }
    }"#;

    #[test]
    fn template_expansion() {
        let s = Scenario::from_json(BASE).unwrap();
        let cfg = s.converter_config().unwrap();
        assert_eq!(cfg.modules.len(), 3);
        assert_eq!(cfg.links.len(), 2);
        assert!((cfg.links[0].v_d_loop - 2.4).abs() < 1e-12);
        assert_eq!(s.outputs, default_artifacts());
        assert_eq!(s.simulation, SimOptions::default());
    }

    #[test]
    fn field_level_errors() {
        let bad = BASE.replace("\"r_load\": 200.0", "\"r_load\": -1.0");
        let msg = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("r_load"), "{msg}");

        let typo = BASE.replace("\"r_load\"", "\"r_lod\"");
        let msg = Scenario::from_json(&typo).unwrap_err().to_string();
        assert!(msg.contains("r_lod") && msg.contains("line"), "{msg}");

        let short = BASE.replace(
            "\"links\": {\"r_loop\": 0.02, \"l_loop\": 5e-8}",
            "\"links\": [{\"r_loop\": 0.02, \"l_loop\": 5e-8}]",
        );
        let msg = Scenario::from_json(&short).unwrap_err().to_string();
        assert!(msg.contains("links"), "{msg}");
    }

    #[test]
    fn grids() {
        let g = Grid::Range { from: 1e-8, to: 1e-2, points: 60, scale: Scale::Log };
        let p = g.points();
        assert_eq!(p.len(), 60);
        assert!((p[0] - 1e-8).abs() < 1e-20 && (p[59] - 1e-2).abs() < 1e-14);
        assert!(g.validate().is_ok());
        assert!(Grid::Values { values: vec![] }.validate().is_err());
        assert!(Grid::Values { values: vec![1.0, 3.0, 2.0] }.validate().is_err());
        assert!(Grid::Values { values: vec![3.0, 2.0] }.validate().is_ok());
    }
}
