use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use disep::circuit::{ConverterConfig, DeviceParams, LinkParams, ModuleParams};
use disep::exec::Exec;
use disep::modulation::ModulatorConfig;
use disep::scenario::SweepParameter;
use disep::sim::SimOptions;
use disep::sweep::simulation_sweep;
use disep::verify::{verify_oracle, Tolerances};

fn executors() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn carrier_sweep(c: &mut Criterion) {
    let dev = DeviceParams::new(8e-3, 1.2).unwrap();
    let module = ModuleParams {
        capacitance: 15e-3,
        v_init: 35.0,
        devices: dev,
    };
    let link = LinkParams::from_devices(20e-3, 50e-9, 2, &dev);
    let cfg = ConverterConfig::uniform(6, module, link, 2, 35.0, 200.0, 60.0, 0.95, 5e3);
    let m = ModulatorConfig::from_converter(&cfg);
    let opts = SimOptions {
        periods: 12,
        oversample: 20,
        ..SimOptions::default()
    };
    let grid = [1e3, 2e3, 4e3, 6e3, 8e3, 10e3, 15e3, 20e3];

    let mut g = c.benchmark_group("carrier_sweep");
    g.sample_size(10);
    for (name, exec) in executors() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulation_sweep(&cfg, &m, &opts, SweepParameter::CarrierFrequency, &grid, 10, exec).unwrap())
        });
    }
    g.finish();
}

fn oracle_batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify_oracle_200");
    g.sample_size(10);
    for (name, exec) in executors() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| verify_oracle(200, 1, Tolerances::default(), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, carrier_sweep, oracle_batch);
criterion_main!(benches);
