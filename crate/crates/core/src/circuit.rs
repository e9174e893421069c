//! Module, link and string parameter records, the six inter-module
//! connection modes, and the conduction-drop model of each mode.
//!
//! Current direction is measured along the string: [`CurrentDirection::Forward`]
//! flows from module `n-1` into module `n`. A module in `SeriesPlus` that
//! delivers power to the output carries forward current, so under a resistive
//! load the series modes conduct in their unfavourable direction and the
//! paralleled-branch envelope only appears while the string absorbs power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of one inter-module connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConnectionMode {
    SeriesMinus,
    SeriesPlus,
    /// `C[n-1]` charges `C[n]`.
    ParallelMinus,
    /// `C[n]` charges `C[n-1]`.
    ParallelPlus,
    BypassMinus,
    BypassPlus,
}

impl ConnectionMode {
    pub const ALL: [ConnectionMode; 6] = [
        ConnectionMode::SeriesMinus,
        ConnectionMode::SeriesPlus,
        ConnectionMode::ParallelMinus,
        ConnectionMode::ParallelPlus,
        ConnectionMode::BypassMinus,
        ConnectionMode::BypassPlus,
    ];

    pub fn is_series(self) -> bool {
        matches!(self, ConnectionMode::SeriesMinus | ConnectionMode::SeriesPlus)
    }

    pub fn is_parallel(self) -> bool {
        matches!(
            self,
            ConnectionMode::ParallelMinus | ConnectionMode::ParallelPlus
        )
    }

    pub fn is_bypass(self) -> bool {
        matches!(self, ConnectionMode::BypassMinus | ConnectionMode::BypassPlus)
    }

    fn index(self) -> usize {
        match self {
            ConnectionMode::SeriesMinus => 0,
            ConnectionMode::SeriesPlus => 1,
            ConnectionMode::ParallelMinus => 2,
            ConnectionMode::ParallelPlus => 3,
            ConnectionMode::BypassMinus => 4,
            ConnectionMode::BypassPlus => 5,
        }
    }

    /// Short label used in CSV exports.
    pub fn label(self) -> &'static str {
        match self {
            ConnectionMode::SeriesMinus => "S-",
            ConnectionMode::SeriesPlus => "S+",
            ConnectionMode::ParallelMinus => "P-",
            ConnectionMode::ParallelPlus => "P+",
            ConnectionMode::BypassMinus => "B-",
            ConnectionMode::BypassPlus => "B+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurrentDirection {
    /// From module `n-1` towards module `n`.
    Forward,
    Reverse,
}

impl CurrentDirection {
    pub fn of(current: f64) -> Self {
        if current >= 0.0 {
            CurrentDirection::Forward
        } else {
            CurrentDirection::Reverse
        }
    }

    fn index(self) -> usize {
        match self {
            CurrentDirection::Forward => 0,
            CurrentDirection::Reverse => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Transistor on-resistance (Ω).
    pub r_ds_on: f64,
    /// Diode forward drop (V).
    pub v_d: f64,
}

impl DeviceParams {
    pub fn new(r_ds_on: f64, v_d: f64) -> Result<Self> {
        let d = DeviceParams { r_ds_on, v_d };
        d.validate("devices")?;
        Ok(d)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        positive(&format!("{field}.r_ds_on"), self.r_ds_on)?;
        non_negative(&format!("{field}.v_d"), self.v_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    /// Storage capacitance (F).
    pub capacitance: f64,
    /// Initial capacitor voltage (V).
    pub v_init: f64,
    pub devices: DeviceParams,
}

impl ModuleParams {
    pub fn validate(&self, field: &str) -> Result<()> {
        positive(&format!("{field}.capacitance"), self.capacitance)?;
        non_negative(&format!("{field}.v_init"), self.v_init)?;
        self.devices.validate(&format!("{field}.devices"))
    }
}

/// Lumped parallelization loop between two neighbouring modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub r_loop: f64,
    pub l_loop: f64,
    /// Lumped diode drop of the whole loop (V).
    pub v_d_loop: f64,
    /// Junction count the lumped drop stands for.
    pub n_loop_diodes: u32,
}

impl LinkParams {
    pub const DEFAULT_LOOP_DIODES: u32 = 2;

    /// Derives the lumped drop from the device diode drop.
    pub fn from_devices(r_loop: f64, l_loop: f64, n_loop_diodes: u32, devices: &DeviceParams) -> Self {
        LinkParams {
            r_loop,
            l_loop,
            v_d_loop: f64::from(n_loop_diodes) * devices.v_d,
            n_loop_diodes,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        positive(&format!("{field}.r_loop"), self.r_loop)?;
        positive(&format!("{field}.l_loop"), self.l_loop)?;
        non_negative(&format!("{field}.v_d_loop"), self.v_d_loop)
    }
}

/// Device path a mode uses for one current direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathModel {
    /// Two paralleled transistor and diode branches: `min(r_ds_on, v_d / i)`.
    Envelope,
    /// Transistors and diodes in series.
    Chain { transistors: u32, diodes: u32 },
}

impl PathModel {
    /// Voltage drop at current magnitude `current` (A).
    pub fn drop(self, current: f64, devices: &DeviceParams) -> f64 {
        let a = current.abs();
        if a == 0.0 {
            return 0.0;
        }
        match self {
            PathModel::Envelope => (devices.r_ds_on * a).min(devices.v_d),
            PathModel::Chain { transistors, diodes } => {
                f64::from(transistors) * devices.r_ds_on * a + f64::from(diodes) * devices.v_d
            }
        }
    }
}

/// Per-mode, per-direction device path matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropTable {
    /// Indexed by mode (`SeriesMinus`, `SeriesPlus`, `ParallelMinus`,
    /// `ParallelPlus`, `BypassMinus`, `BypassPlus`) then direction
    /// (`Forward`, `Reverse`).
    pub paths: [[PathModel; 2]; 6],
}

impl Default for DropTable {
    fn default() -> Self {
        const TD: PathModel = PathModel::Chain {
            transistors: 1,
            diodes: 1,
        };
        let mut paths = [[TD; 2]; 6];
        paths[ConnectionMode::SeriesMinus.index()][CurrentDirection::Forward.index()] =
            PathModel::Envelope;
        paths[ConnectionMode::SeriesPlus.index()][CurrentDirection::Reverse.index()] =
            PathModel::Envelope;
        DropTable { paths }
    }
}

impl DropTable {
    pub fn path(&self, mode: ConnectionMode, direction: CurrentDirection) -> PathModel {
        self.paths[mode.index()][direction.index()]
    }
}

/// Voltage a module inserts into the string in the given mode.
pub fn output_contribution(mode: ConnectionMode, v_cap: f64) -> f64 {
    match mode {
        ConnectionMode::SeriesPlus => v_cap,
        ConnectionMode::SeriesMinus => -v_cap,
        _ => 0.0,
    }
}

/// Impedance of the two paralleled series branches for a favourable current.
pub fn series_path_impedance(devices: &DeviceParams, current: f64) -> Result<f64> {
    if !(current > 0.0) {
        return Err(Error::Domain(format!(
            "series path impedance needs a positive current, got {current}"
        )));
    }
    Ok(devices.r_ds_on.min(devices.v_d / current))
}

/// Conduction drop of a mode under the default device-path matrix.
pub fn conduction_drop(
    mode: ConnectionMode,
    direction: CurrentDirection,
    current: f64,
    devices: &DeviceParams,
) -> f64 {
    conduction_drop_with(&DropTable::default(), mode, direction, current, devices)
}

pub fn conduction_drop_with(
    table: &DropTable,
    mode: ConnectionMode,
    direction: CurrentDirection,
    current: f64,
    devices: &DeviceParams,
) -> f64 {
    table.path(mode, direction).drop(current, devices)
}

/// Solves the string current of a resistive load.
///
/// `emf` is the summed series contribution, `modes[p]` / `devices[p]` the
/// path of each string position. Returns `(i_out, total_drop)` with
/// `i_out * r_load = emf - total_drop`.
pub fn solve_string_current(
    emf: f64,
    modes: &[ConnectionMode],
    devices: &[DeviceParams],
    table: &DropTable,
    r_load: f64,
) -> (f64, f64) {
    debug_assert_eq!(modes.len(), devices.len());
    if emf == 0.0 {
        return (0.0, 0.0);
    }
    let dir = CurrentDirection::of(emf);
    let magnitude = emf.abs();

    // Piecewise-linear in |i|: refine which envelope paths sit on their diode branch.
    let mut a = 0.0_f64;
    for _ in 0..=modes.len() + 1 {
        let mut slope = r_load;
        let mut offset = 0.0;
        for (mode, dev) in modes.iter().zip(devices) {
            match table.path(*mode, dir) {
                PathModel::Envelope => {
                    if dev.r_ds_on * a >= dev.v_d && a > 0.0 {
                        offset += dev.v_d;
                    } else {
                        slope += dev.r_ds_on;
                    }
                }
                PathModel::Chain { transistors, diodes } => {
                    slope += f64::from(transistors) * dev.r_ds_on;
                    offset += f64::from(diodes) * dev.v_d;
                }
            }
        }
        let next = ((magnitude - offset) / slope).max(0.0);
        if next == a {
            break;
        }
        a = next;
    }
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let drop: f64 = modes
        .iter()
        .zip(devices)
        .map(|(m, d)| table.path(*m, dir).drop(a, d))
        .sum();
    let i = a.copysign(emf);
    (i, drop)
}

/// Full description of an N-module string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterConfig {
    pub n_modules: usize,
    pub modules: Vec<ModuleParams>,
    /// `links[j]` joins module `j` and module `j + 1`.
    pub links: Vec<LinkParams>,
    pub supply_index: usize,
    pub v_supply: f64,
    pub r_load: f64,
    pub f_out: f64,
    pub modulation_index: f64,
    pub f_carrier: f64,
    #[serde(default)]
    pub drop_table: DropTable,
}

impl ConverterConfig {
    /// A uniform string: every module and link identical.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n_modules: usize,
        module: ModuleParams,
        link: LinkParams,
        supply_index: usize,
        v_supply: f64,
        r_load: f64,
        f_out: f64,
        modulation_index: f64,
        f_carrier: f64,
    ) -> Self {
        ConverterConfig {
            n_modules,
            modules: vec![module; n_modules],
            links: vec![link; n_modules.saturating_sub(1)],
            supply_index,
            v_supply,
            r_load,
            f_out,
            modulation_index,
            f_carrier,
            drop_table: DropTable::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modules < 2 {
            return Err(Error::invalid("n_modules", "at least two modules are required"));
        }
        if self.modules.len() != self.n_modules {
            return Err(Error::invalid(
                "modules",
                format!("expected {} entries, found {}", self.n_modules, self.modules.len()),
            ));
        }
        if self.links.len() != self.n_modules - 1 {
            return Err(Error::invalid(
                "links",
                format!("expected {} entries, found {}", self.n_modules - 1, self.links.len()),
            ));
        }
        for (k, m) in self.modules.iter().enumerate() {
            m.validate(&format!("modules[{k}]"))?;
        }
        for (j, l) in self.links.iter().enumerate() {
            l.validate(&format!("links[{j}]"))?;
        }
        if self.supply_index >= self.n_modules {
            return Err(Error::invalid(
                "supply_index",
                format!("must be below n_modules = {}", self.n_modules),
            ));
        }
        non_negative("v_supply", self.v_supply)?;
        positive("r_load", self.r_load)?;
        positive("f_out", self.f_out)?;
        if !(0.0..=1.0).contains(&self.modulation_index) {
            return Err(Error::invalid("modulation_index", "must lie in [0, 1]"));
        }
        positive("f_carrier", self.f_carrier)?;
        if self.f_carrier <= self.f_out {
            return Err(Error::invalid("f_carrier", "must exceed f_out"));
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be >= 0, got {v}")))
    }
}
