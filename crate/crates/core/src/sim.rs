//! Time-stepped simulation of an N-module string.
//!
//! Every sub-step integrates one coupled system with RK4: module capacitors,
//! the inductor current of each conducting parallel loop, and the energy
//! accumulators (conduction, parallelization, load, supply). A loop's diode
//! turns on whenever its commanded direction is forward biased by more than
//! the loop drop, turns off at the current zero, and is cut at the end of the
//! dwell with its inductor energy booked as parallelization loss.

use serde::{Deserialize, Serialize};

use crate::circuit::{solve_string_current, ConnectionMode, ConverterConfig, DeviceParams};
use crate::error::{Error, Result};
use crate::modulation::{ModeCommand, Modulator, ModulatorConfig};
use crate::oracle::{OdeSystem, Rk4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplyModel {
    /// Supplied capacitor held at `v_supply`.
    Clamp,
    /// Source behind a series resistance (Ω).
    Resistive { r_src: f64 },
    /// No source; the string runs from stored charge.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Horizon in fundamental periods.
    pub periods: usize,
    /// Sub-steps per carrier period (lower bound; the grid is aligned to the fundamental).
    pub oversample: usize,
    /// Integrate load draw and loop dynamics together.
    pub load_coupled: bool,
    /// Energy per device transition (J).
    pub e_sw: f64,
    pub devices_per_transition: u32,
    pub supply: SupplyModel,
    /// Record module voltages and link currents every `trace_stride` steps; 0 disables.
    pub trace_stride: usize,
    /// Settled when per-period mean voltages move less than this fraction.
    pub settle_tol: f64,
    /// Divergence guard (V); 0 picks ten times the largest configured voltage.
    pub v_max: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            periods: 30,
            oversample: 50,
            load_coupled: true,
            e_sw: 0.0,
            devices_per_transition: 2,
            supply: SupplyModel::Clamp,
            trace_stride: 0,
            settle_tol: 1e-3,
            v_max: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub conduction_j: f64,
    pub switching_j: f64,
    pub parallelization_j: f64,
    /// Mode changes per string position.
    pub transition_count: Vec<u64>,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.conduction_j + self.switching_j + self.parallelization_j
    }

    /// Element-wise `self - earlier`.
    pub fn since(&self, earlier: &LossBreakdown) -> LossBreakdown {
        LossBreakdown {
            conduction_j: self.conduction_j - earlier.conduction_j,
            switching_j: self.switching_j - earlier.switching_j,
            parallelization_j: self.parallelization_j - earlier.parallelization_j,
            transition_count: self
                .transition_count
                .iter()
                .zip(earlier.transition_count.iter().chain(std::iter::repeat(&0)))
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub v_caps: Vec<f64>,
    /// Signed loop current of each link; positive flows from module `j` to `j + 1`.
    pub link_currents: Vec<f64>,
    /// `+1` / `-1` while the loop diode conducts in that direction, else 0.
    pub link_dir: Vec<i8>,
    pub loss: LossBreakdown,
    pub energy_supplied_j: f64,
    pub energy_delivered_j: f64,
    prev_modes: Vec<Option<ConnectionMode>>,
}

impl SimState {
    pub fn initial(cfg: &ConverterConfig, supply: &SupplyModel) -> Self {
        let mut v_caps: Vec<f64> = cfg.modules.iter().map(|m| m.v_init).collect();
        if matches!(supply, SupplyModel::Clamp) {
            v_caps[cfg.supply_index] = cfg.v_supply;
        }
        let n = cfg.n_modules;
        SimState {
            t: 0.0,
            v_caps,
            link_currents: vec![0.0; n - 1],
            link_dir: vec![0; n - 1],
            loss: LossBreakdown {
                transition_count: vec![0; n],
                ..Default::default()
            },
            energy_supplied_j: 0.0,
            energy_delivered_j: 0.0,
            prev_modes: vec![None; n],
        }
    }

    /// Capacitor plus inductor energy (J).
    pub fn stored_energy(&self, cfg: &ConverterConfig) -> f64 {
        let caps: f64 = cfg
            .modules
            .iter()
            .zip(&self.v_caps)
            .map(|(m, v)| 0.5 * m.capacitance * v * v)
            .sum();
        let inductors: f64 = cfg
            .links
            .iter()
            .zip(&self.link_currents)
            .map(|(l, i)| 0.5 * l.l_loop * i * i)
            .sum();
        caps + inductors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputSample {
    pub t: f64,
    pub v_out: f64,
    pub i_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub v_caps: Vec<f64>,
    pub link_currents: Vec<f64>,
}

/// One contiguous parallel dwell of a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellRecord {
    pub link: usize,
    pub mode: ConnectionMode,
    pub t_start: f64,
    pub t_end: f64,
    /// Largest current in the mode's diode direction (A).
    pub peak_a: f64,
    pub t_peak: f64,
    /// Smallest current in the diode direction; negative means reversal.
    pub min_forward_a: f64,
    /// Largest rise above the running minimum after the peak (A).
    pub rebound_a: f64,
}

impl DwellRecord {
    pub fn conducted(&self) -> bool {
        self.peak_a > 0.0
    }
}

/// Cumulative energy book at a period boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySnapshot {
    pub t: f64,
    pub supplied_j: f64,
    pub delivered_j: f64,
    pub stored_j: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub dt: f64,
    pub samples_per_period: usize,
    pub f_out: f64,
    pub n_modules: usize,
    pub supply_index: usize,
    pub r_load: f64,
    /// Output voltage and current at every step.
    pub output: Vec<OutputSample>,
    pub traces: Vec<TraceSample>,
    pub dwells: Vec<DwellRecord>,
    /// Mean module voltages of each completed fundamental period.
    pub period_means: Vec<Vec<f64>>,
    /// Energy book at t = 0 and at the end of every period.
    pub snapshots: Vec<EnergySnapshot>,
    pub loss: LossBreakdown,
    pub energy_delivered_j: f64,
    pub energy_supplied_j: f64,
    pub stored_initial_j: f64,
    pub stored_final_j: f64,
    pub final_voltages: Vec<f64>,
    pub settled: bool,
}

impl SimResult {
    /// Output samples of the last `k` periods.
    pub fn window(&self, k: usize) -> &[OutputSample] {
        let len = (k * self.samples_per_period).min(self.output.len());
        &self.output[self.output.len() - len..]
    }

    /// `supplied - delivered - Δstored - losses`, relative to the supplied energy.
    pub fn energy_residual(&self) -> f64 {
        let lhs = self.energy_supplied_j;
        let rhs = self.energy_delivered_j + (self.stored_final_j - self.stored_initial_j) + self.loss.total();
        (lhs - rhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
    }

    /// Dwells that start within the last `k` periods.
    pub fn window_dwells(&self, k: usize) -> impl Iterator<Item = &DwellRecord> {
        let t0 = self.output.last().map_or(0.0, |s| s.t) - k as f64 / self.f_out;
        self.dwells.iter().filter(move |d| d.t_start >= t0)
    }
}

/// Per-mean module voltage over the last `k_periods` periods.
pub fn steady_state_profile(result: &SimResult, k_periods: usize) -> Result<Vec<f64>> {
    if !result.settled {
        return Err(Error::NotSettled {
            periods: result.period_means.len(),
        });
    }
    let k = k_periods.clamp(1, result.period_means.len().max(1));
    let tail = &result.period_means[result.period_means.len() - k..];
    let mut profile = vec![0.0; result.n_modules];
    for means in tail {
        for (p, v) in profile.iter_mut().zip(means) {
            *p += v / k as f64;
        }
    }
    Ok(profile)
}

/// The coupled ODE of one sub-step.
struct Network<'a> {
    cfg: &'a ConverterConfig,
    devices: &'a [DeviceParams],
    modes: &'a [ConnectionMode],
    levels: &'a [i8],
    link_dir: &'a [i8],
    coupled: bool,
    resistive_supply: Option<f64>,
}

// state layout: [v_caps (n) | loop current magnitudes (n-1) | e_cond, e_par, e_load, e_supply]
impl Network<'_> {
    fn n(&self) -> usize {
        self.cfg.n_modules
    }

    fn output(&self, v: &[f64]) -> (f64, f64, f64) {
        let emf: f64 = self.levels.iter().zip(v).map(|(&l, &v)| f64::from(l) * v).sum();
        let (i, drop) = solve_string_current(emf, self.modes, self.devices, &self.cfg.drop_table, self.cfg.r_load);
        (emf, i, drop)
    }
}

impl OdeSystem for Network<'_> {
    fn dim(&self) -> usize {
        2 * self.n() + 3
    }

    fn derivative(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n();
        let (v, rest) = y.split_at(n);
        let currents = &rest[..n - 1];
        dy.iter_mut().for_each(|d| *d = 0.0);
        let acc = 2 * n - 1;

        if self.coupled {
            let (_, i_out, drop) = self.output(v);
            for k in 0..n {
                if self.levels[k] != 0 {
                    dy[k] -= f64::from(self.levels[k]) * i_out / self.cfg.modules[k].capacitance;
                }
            }
            dy[acc] = drop * i_out.abs();
            dy[acc + 2] = self.cfg.r_load * i_out * i_out;
        }

        for (j, link) in self.cfg.links.iter().enumerate() {
            let dir = self.link_dir[j];
            if dir == 0 {
                continue;
            }
            let (from, to) = if dir > 0 { (j, j + 1) } else { (j + 1, j) };
            let i = currents[j];
            dy[n + j] = (v[from] - v[to] - link.v_d_loop - link.r_loop * i) / link.l_loop;
            dy[from] -= i / self.cfg.modules[from].capacitance;
            dy[to] += i / self.cfg.modules[to].capacitance;
            dy[acc + 1] += link.r_loop * i * i + link.v_d_loop * i;
        }

        if let Some(r_src) = self.resistive_supply {
            let s = self.cfg.supply_index;
            let i_src = (self.cfg.v_supply - v[s]) / r_src;
            dy[s] += i_src / self.cfg.modules[s].capacitance;
            dy[acc + 3] = v[s] * i_src;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenDwell {
    mode: ConnectionMode,
    t_start: f64,
    peak: f64,
    t_peak: f64,
    min_forward: f64,
    running_min: f64,
    rebound: f64,
}

/// Stateful stepper with preallocated buffers.
pub struct Simulator<'a> {
    cfg: &'a ConverterConfig,
    opts: &'a SimOptions,
    devices: Vec<DeviceParams>,
    modes: Vec<ConnectionMode>,
    y: Vec<f64>,
    rk: Rk4,
    h_max: f64,
    v_max: f64,
    open: Vec<Option<OpenDwell>>,
    dwells: Vec<DwellRecord>,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a ConverterConfig, opts: &'a SimOptions) -> Result<Self> {
        cfg.validate()?;
        if opts.oversample < 20 {
            return Err(Error::invalid("simulation.oversample", "must be at least 20"));
        }
        if let SupplyModel::Resistive { r_src } = opts.supply {
            if !(r_src > 0.0) {
                return Err(Error::invalid("simulation.supply.r_src", "must be > 0"));
            }
        }
        let n = cfg.n_modules;
        let c_min = cfg.modules.iter().map(|m| m.capacitance).fold(f64::INFINITY, f64::min);
        let h_max = cfg
            .links
            .iter()
            .map(|l| (0.5 * l.l_loop / l.r_loop).min(0.3 * (0.5 * l.l_loop * c_min).sqrt()))
            .fold(f64::INFINITY, f64::min);
        let v_ref = cfg
            .modules
            .iter()
            .map(|m| m.v_init)
            .fold(cfg.v_supply, f64::max);
        Ok(Simulator {
            cfg,
            opts,
            devices: cfg.modules.iter().map(|m| m.devices).collect(),
            modes: vec![ConnectionMode::BypassPlus; n],
            y: vec![0.0; 2 * n + 3],
            rk: Rk4::new(2 * n + 3),
            h_max,
            v_max: if opts.v_max > 0.0 { opts.v_max } else { 10.0 * v_ref + 1.0 },
            open: vec![None; n - 1],
            dwells: Vec::new(),
        })
    }

    pub fn dwells(&self) -> &[DwellRecord] {
        &self.dwells
    }

    /// Output voltage and current for `state` under `cmd`.
    pub fn output(&mut self, state: &SimState, cmd: &ModeCommand) -> OutputSample {
        for k in 0..self.cfg.n_modules {
            self.modes[k] = cmd.position_mode(k);
        }
        let net = Network {
            cfg: self.cfg,
            devices: &self.devices,
            modes: &self.modes,
            levels: &cmd.module_levels,
            link_dir: &state.link_dir,
            coupled: true,
            resistive_supply: None,
        };
        let (emf, i, drop) = net.output(&state.v_caps);
        OutputSample {
            t: state.t,
            v_out: if i == 0.0 { 0.0 } else { emf - drop.copysign(emf) },
            i_out: i,
        }
    }

    /// Advances `state` by `dt` under `cmd`.
    pub fn step(&mut self, state: &mut SimState, cmd: &ModeCommand, dt: f64) -> Result<()> {
        let cfg = self.cfg;
        let n = cfg.n_modules;
        let t_carrier = 1.0 / cfg.f_carrier;
        if dt > t_carrier / 20.0 * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "step {dt:.3e} s exceeds a twentieth of the carrier period"
            )));
        }

        // switching events
        for k in 0..n {
            let mode = cmd.position_mode(k);
            self.modes[k] = mode;
            if let Some(prev) = state.prev_modes[k] {
                if prev != mode {
                    state.loss.transition_count[k] += 1;
                    let e = self.opts.e_sw * f64::from(self.opts.devices_per_transition);
                    if e > 0.0 {
                        let c = cfg.modules[k].capacitance;
                        let v = state.v_caps[k];
                        let v_new = (v * v - 2.0 * e / c).max(0.0).sqrt();
                        state.loss.switching_j += 0.5 * c * (v * v - v_new * v_new);
                        state.v_caps[k] = v_new;
                    }
                }
            }
            state.prev_modes[k] = Some(mode);
        }

        // dwell ends: cut loops whose command no longer matches their conduction
        for j in 0..n - 1 {
            let mode = cmd.link_modes[j];
            if let Some(open) = self.open[j] {
                if open.mode != mode {
                    self.close_dwell(j, state.t);
                }
            }
            if mode.is_parallel() && self.open[j].is_none() {
                self.open[j] = Some(OpenDwell {
                    mode,
                    t_start: state.t,
                    peak: 0.0,
                    t_peak: state.t,
                    min_forward: 0.0,
                    running_min: 0.0,
                    rebound: 0.0,
                });
            }
            let dir = state.link_dir[j];
            if dir != 0 && direction_of(mode) != dir {
                let i = state.link_currents[j];
                state.loss.parallelization_j += 0.5 * cfg.links[j].l_loop * i * i;
                state.link_currents[j] = 0.0;
                state.link_dir[j] = 0;
            }
        }

        let n_sub = (dt / self.h_max).ceil().max(1.0) as usize;
        let h = dt / n_sub as f64;
        let acc = 2 * n - 1;
        for sub in 0..n_sub {
            let t = state.t + sub as f64 * h;
            // diode turn-on
            for j in 0..n - 1 {
                if state.link_dir[j] != 0 {
                    continue;
                }
                let dir = direction_of(cmd.link_modes[j]);
                if dir == 0 {
                    continue;
                }
                let (from, to) = if dir > 0 { (j, j + 1) } else { (j + 1, j) };
                if state.v_caps[from] - state.v_caps[to] > cfg.links[j].v_d_loop {
                    state.link_dir[j] = dir;
                }
            }

            self.y[..n].copy_from_slice(&state.v_caps);
            for j in 0..n - 1 {
                self.y[n + j] = state.link_currents[j].abs();
            }
            self.y[acc..].iter_mut().for_each(|e| *e = 0.0);

            if !self.opts.load_coupled {
                let net = network(cfg, self.opts, &self.devices, &self.modes, cmd, &state.link_dir, true);
                let (_, i_out, drop) = net.output(&state.v_caps);
                for k in 0..n {
                    if cmd.module_levels[k] != 0 {
                        self.y[k] -= f64::from(cmd.module_levels[k]) * i_out * h / cfg.modules[k].capacitance;
                    }
                }
                self.y[acc] = drop * i_out.abs() * h;
                self.y[acc + 2] = cfg.r_load * i_out * i_out * h;
            }

            let net = network(cfg, self.opts, &self.devices, &self.modes, cmd, &state.link_dir, self.opts.load_coupled);
            self.rk.step(&net, t, &mut self.y, h);

            state.v_caps.copy_from_slice(&self.y[..n]);
            state.loss.conduction_j += self.y[acc];
            state.loss.parallelization_j += self.y[acc + 1];
            state.energy_delivered_j += self.y[acc + 2];
            state.energy_supplied_j += self.y[acc + 3];

            for j in 0..n - 1 {
                let dir = state.link_dir[j];
                let mut i = self.y[n + j];
                if dir != 0 && i <= 0.0 {
                    state.loss.parallelization_j += 0.5 * cfg.links[j].l_loop * i * i;
                    i = 0.0;
                    state.link_dir[j] = 0;
                }
                state.link_currents[j] = if dir == 0 { 0.0 } else { f64::from(dir) * i };
                if let Some(open) = self.open[j].as_mut() {
                    let forward = state.link_currents[j] * f64::from(direction_of(open.mode));
                    let t_now = t + h;
                    open.min_forward = open.min_forward.min(forward);
                    if forward > open.peak {
                        open.peak = forward;
                        open.t_peak = t_now;
                        open.running_min = forward;
                    } else {
                        open.running_min = open.running_min.min(forward);
                        open.rebound = open.rebound.max(forward - open.running_min);
                    }
                }
            }

            if let SupplyModel::Clamp = self.opts.supply {
                let s = cfg.supply_index;
                let c = cfg.modules[s].capacitance;
                let v = state.v_caps[s];
                state.energy_supplied_j += 0.5 * c * (cfg.v_supply * cfg.v_supply - v * v);
                state.v_caps[s] = cfg.v_supply;
            }

            for (k, &v) in state.v_caps.iter().enumerate() {
                if !v.is_finite() || v > self.v_max || v < -1e-6 * self.v_max {
                    return Err(Error::Diverged { t: t + h, module: k, voltage: v });
                }
            }
        }
        state.t += dt;
        Ok(())
    }

    fn close_dwell(&mut self, j: usize, t: f64) {
        if let Some(open) = self.open[j].take() {
            self.dwells.push(DwellRecord {
                link: j,
                mode: open.mode,
                t_start: open.t_start,
                t_end: t,
                peak_a: open.peak,
                t_peak: open.t_peak,
                min_forward_a: open.min_forward,
                rebound_a: open.rebound,
            });
        }
    }

    fn finish(&mut self, t: f64) -> Vec<DwellRecord> {
        for j in 0..self.open.len() {
            self.close_dwell(j, t);
        }
        std::mem::take(&mut self.dwells)
    }
}

#[allow(clippy::too_many_arguments)]
fn network<'b>(
    cfg: &'b ConverterConfig,
    opts: &SimOptions,
    devices: &'b [DeviceParams],
    modes: &'b [ConnectionMode],
    cmd: &'b ModeCommand,
    link_dir: &'b [i8],
    coupled: bool,
) -> Network<'b> {
    Network {
        cfg,
        devices,
        modes,
        levels: &cmd.module_levels,
        link_dir,
        coupled,
        resistive_supply: match opts.supply {
            SupplyModel::Resistive { r_src } => Some(r_src),
            _ => None,
        },
    }
}

fn direction_of(mode: ConnectionMode) -> i8 {
    match mode {
        ConnectionMode::ParallelMinus => 1,
        ConnectionMode::ParallelPlus => -1,
        _ => 0,
    }
}

/// Single step on a copy of `state`.
pub fn step(
    cfg: &ConverterConfig,
    opts: &SimOptions,
    state: &SimState,
    cmd: &ModeCommand,
    dt: f64,
) -> Result<SimState> {
    let mut sim = Simulator::new(cfg, opts)?;
    let mut next = state.clone();
    sim.step(&mut next, cmd, dt)?;
    Ok(next)
}

/// Number of uniform steps per fundamental period for the given oversampling.
pub fn samples_per_period(cfg: &ConverterConfig, oversample: usize) -> usize {
    (cfg.f_carrier * oversample as f64 / cfg.f_out - 1e-9).ceil() as usize
}

/// Simulates `opts.periods` fundamental periods.
pub fn run(cfg: &ConverterConfig, modulator: &ModulatorConfig, opts: &SimOptions) -> Result<SimResult> {
    let mut sim = Simulator::new(cfg, opts)?;
    let mut modulator = Modulator::new(modulator.clone())?;
    let n = cfg.n_modules;
    let spp = samples_per_period(cfg, opts.oversample);
    let dt = 1.0 / (cfg.f_out * spp as f64);
    let steps = opts.periods * spp;

    let mut state = SimState::initial(cfg, &opts.supply);
    let stored_initial = state.stored_energy(cfg);
    let mut output = Vec::with_capacity(steps);
    let mut traces = Vec::new();
    let mut period_means = Vec::with_capacity(opts.periods);
    let mut snapshots = vec![EnergySnapshot {
        t: 0.0,
        supplied_j: 0.0,
        delivered_j: 0.0,
        stored_j: stored_initial,
        loss: state.loss.clone(),
    }];
    let mut sums = vec![0.0; n];

    for s in 0..steps {
        let t = s as f64 * dt;
        let cmd = modulator.command(t);
        state.t = t;
        output.push(sim.output(&state, &cmd));
        if opts.trace_stride > 0 && s % opts.trace_stride == 0 {
            traces.push(TraceSample {
                t,
                v_caps: state.v_caps.clone(),
                link_currents: state.link_currents.clone(),
            });
        }
        sim.step(&mut state, &cmd, dt)?;
        for (acc, v) in sums.iter_mut().zip(&state.v_caps) {
            *acc += v;
        }
        if (s + 1) % spp == 0 {
            period_means.push(sums.iter().map(|v| v / spp as f64).collect::<Vec<_>>());
            sums.iter_mut().for_each(|v| *v = 0.0);
            snapshots.push(EnergySnapshot {
                t: state.t,
                supplied_j: state.energy_supplied_j,
                delivered_j: state.energy_delivered_j,
                stored_j: state.stored_energy(cfg),
                loss: state.loss.clone(),
            });
        }
    }

    let settled = match period_means.as_slice() {
        [.., a, b] => a.iter().zip(b).all(|(x, y)| {
            let scale = x.abs().max(y.abs());
            scale == 0.0 || (x - y).abs() <= opts.settle_tol * scale
        }),
        _ => false,
    };

    Ok(SimResult {
        dt,
        samples_per_period: spp,
        f_out: cfg.f_out,
        n_modules: n,
        supply_index: cfg.supply_index,
        r_load: cfg.r_load,
        output,
        traces,
        dwells: sim.finish(state.t),
        period_means,
        snapshots,
        loss: state.loss.clone(),
        energy_delivered_j: state.energy_delivered_j,
        energy_supplied_j: state.energy_supplied_j,
        stored_initial_j: stored_initial,
        stored_final_j: state.stored_energy(cfg),
        final_voltages: state.v_caps.clone(),
        settled,
    })
}
