use disep::circuit::{ConverterConfig, DeviceParams, LinkParams, ModuleParams};
use disep::metrics;
use disep::modulation::ModulatorConfig;
use disep::sim::{run, steady_state_profile, SimOptions, SupplyModel};
use proptest::prelude::*;

fn string(n: usize, c: f64, l: f64, r_load: f64, m: f64, supply_index: usize) -> ConverterConfig {
    let dev = DeviceParams::new(8e-3, 1.2).unwrap();
    let module = ModuleParams {
        capacitance: c,
        v_init: 35.0,
        devices: dev,
    };
    let link = LinkParams::from_devices(20e-3, l, 2, &dev);
    ConverterConfig::uniform(n, module, link, supply_index, 35.0, r_load, 60.0, m, 3e3)
}

fn short() -> SimOptions {
    SimOptions {
        periods: 3,
        oversample: 20,
        ..SimOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_books_balance(
        n in 2usize..6,
        c in 2e-3f64..20e-3,
        l in 10e-9f64..2e-6,
        r_load in 50.0f64..500.0,
        m in 0.0f64..1.0,
        e_sw in 0.0f64..5e-4,
        sup in 0usize..6,
    ) {
        let cfg = string(n, c, l, r_load, m, sup % n);
        let md = ModulatorConfig::from_converter(&cfg);
        let opts = SimOptions { e_sw, ..short() };
        let r = run(&cfg, &md, &opts).unwrap();
        prop_assert!(r.energy_residual().abs() < 5e-3, "{}", r.energy_residual());
        prop_assert!(r.final_voltages.iter().all(|v| *v >= 0.0));
        prop_assert!(r.loss.conduction_j >= 0.0 && r.loss.parallelization_j >= 0.0 && r.loss.switching_j >= 0.0);
        for d in &r.dwells {
            prop_assert!(d.min_forward_a >= 0.0);
        }
        for s in &r.output {
            prop_assert!((s.i_out * r_load - s.v_out).abs() < 1e-9 * (1.0 + s.v_out.abs()));
        }
    }

    #[test]
    fn closed_string_conserves_charge(
        n in 2usize..6,
        v in proptest::collection::vec(10.0f64..40.0, 6),
        c in proptest::collection::vec(2e-3f64..20e-3, 6),
        l in 10e-9f64..2e-6,
    ) {
        let mut cfg = string(n, 10e-3, l, 200.0, 0.0, 0);
        for k in 0..n {
            cfg.modules[k].v_init = v[k];
            cfg.modules[k].capacitance = c[k];
        }
        let opts = SimOptions { supply: SupplyModel::None, ..short() };
        let r = run(&cfg, &ModulatorConfig::from_converter(&cfg), &opts).unwrap();
        let q0: f64 = cfg.modules.iter().map(|m| m.capacitance * m.v_init).sum();
        let q1: f64 = cfg.modules.iter().zip(&r.final_voltages).map(|(m, v)| m.capacitance * v).sum();
        prop_assert!(((q1 - q0) / q0).abs() < 1e-12);
    }
}

#[test]
fn supply_at_end_gives_monotone_ladder() {
    let cfg = string(5, 15e-3, 50e-9, 200.0, 0.9, 0);
    let opts = SimOptions {
        periods: 60,
        oversample: 20,
        ..SimOptions::default()
    };
    let r = run(&cfg, &ModulatorConfig::from_converter(&cfg), &opts).unwrap();
    let p = steady_state_profile(&r, 10).unwrap();
    assert!(p.windows(2).all(|w| w[1] < w[0]), "{p:?}");
    let dev = metrics::deviation_vs_distance(&p, 0);
    assert!(dev.windows(2).all(|w| w[1].1 > w[0].1));
}

#[test]
fn lossless_loops_equalize() {
    let mut cfg = string(4, 15e-3, 50e-9, 200.0, 0.9, 1);
    for l in &mut cfg.links {
        l.v_d_loop = 0.0;
    }
    let opts = SimOptions {
        periods: 20,
        oversample: 20,
        ..SimOptions::default()
    };
    let r = run(&cfg, &ModulatorConfig::from_converter(&cfg), &opts).unwrap();
    let p = steady_state_profile(&r, 10).unwrap();
    let dev = metrics::deviation_vs_distance(&p, 1);
    assert!(dev.iter().all(|(_, v)| v.abs() < 0.5), "{dev:?}");
}

#[test]
fn thd_n_bounds_thd_on_simulated_output() {
    let cfg = string(4, 15e-3, 50e-9, 200.0, 0.9, 1);
    let opts = SimOptions {
        periods: 30,
        oversample: 20,
        ..SimOptions::default()
    };
    let r = run(&cfg, &ModulatorConfig::from_converter(&cfg), &opts).unwrap();
    let s = metrics::output_spectrum(&r, 10).unwrap();
    assert!(s.parseval_residual().abs() < 1e-6);
    assert!(metrics::thd_n(&s).unwrap() >= metrics::thd(&s, metrics::DEFAULT_H_MAX).unwrap());
    let eff = metrics::efficiency(&r, 10).unwrap();
    assert!(eff > 0.0 && eff < 1.0);
}

#[test]
fn lossless_configuration_has_unit_efficiency() {
    let dev = DeviceParams::new(1e-12, 0.0).unwrap();
    let module = ModuleParams {
        capacitance: 1e3,
        v_init: 35.0,
        devices: dev,
    };
    // loops that never forward-bias
    let link = LinkParams {
        r_loop: 20e-3,
        l_loop: 50e-9,
        v_d_loop: 1e3,
        n_loop_diodes: 0,
    };
    let cfg = ConverterConfig::uniform(3, module, link, 1, 35.0, 200.0, 60.0, 0.9, 3e3);
    let opts = SimOptions {
        periods: 12,
        oversample: 20,
        ..SimOptions::default()
    };
    let r = run(&cfg, &ModulatorConfig::from_converter(&cfg), &opts).unwrap();
    assert_eq!(r.loss.parallelization_j, 0.0);
    assert!((metrics::efficiency(&r, 10).unwrap() - 1.0).abs() < 1e-9);
}
