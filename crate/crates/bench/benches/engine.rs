use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use playweave::{load_model, parse_script, Model, Options, System, TextSource, Value};

const RAILCAR: &str = include_str!("../../../fixtures/railcar.rxm");
const RAILCAR_SCRIPT: &str = include_str!("../../../fixtures/railcar.rxs");
const FIG3: &str = include_str!("../../../fixtures/fig3.rxm");
const SWITCH: &str = include_str!("../../../fixtures/switch_light_1.rxm");
const PLATFORM: &str = include_str!("../../../fixtures/platform_manager.rxm");

fn model(name: &str, text: &str) -> Arc<Model> {
    Arc::new(load_model(&[TextSource { name, text }]).expect("fixture loads"))
}

fn parsing(c: &mut Criterion) {
    c.bench_function("load railcar model", |b| b.iter(|| load_model(&[TextSource { name: "r", text: black_box(RAILCAR) }])));
}

fn scripts(c: &mut Criterion) {
    let rail = model("railcar", RAILCAR);
    let script = parse_script(RAILCAR_SCRIPT, &rail).expect("script parses");
    c.bench_function("railcar script", |b| {
        b.iter(|| {
            let mut sys = System::new(rail.clone(), Options::default()).unwrap();
            sys.run_script(&script)
        })
    });
    let fig3 = model("fig3", FIG3);
    c.bench_function("fig3 two injections", |b| {
        b.iter(|| {
            let mut sys = System::new(fig3.clone(), Options::default()).unwrap();
            sys.inject(None, "a", "E1", vec![]).unwrap();
            sys.inject(None, "c", "E5", vec![]).unwrap()
        })
    });
}

/// Chart play-out throughput: every click runs a full chart copy.
fn clicks(c: &mut Criterion) {
    let m = model("switch", SWITCH);
    let mut group = c.benchmark_group("switch-light clicks");
    for n in [10u64, 100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| {
                let mut sys = System::new(m.clone(), Options::default()).unwrap();
                for _ in 0..n {
                    sys.inject(None, "switch1", "click", vec![]).unwrap();
                }
                sys.trace().len()
            })
        });
    }
    group.finish();
}

/// Timer-driven statechart steps: one retry per simulated second.
fn retries(c: &mut Criterion) {
    let m = model("platform", PLATFORM);
    c.bench_function("platform retries over 10 min", |b| {
        b.iter(|| {
            let mut sys = System::new(m.clone(), Options::default()).unwrap();
            for p in [1, 2] {
                sys.inject(None, "pm1", "reserve", vec![Value::Int(p)]).unwrap();
            }
            sys.inject(None, "pm1", "connectSegment", vec![Value::Int(1), Value::Str("x".into()), Value::Int(0)]).unwrap();
            sys.tick(600_000).unwrap().len()
        })
    });
}

fn snapshots(c: &mut Criterion) {
    let rail = model("railcar", RAILCAR);
    let mut sys = System::new(rail.clone(), Options::default()).unwrap();
    sys.inject(None, "car1", "set_pos", vec![Value::Int(905)]).unwrap();
    let snap = sys.snapshot();
    c.bench_function("railcar snapshot to json and back", |b| {
        b.iter(|| {
            let json = serde_json::to_string(&snap).unwrap();
            let mut fresh = System::new(rail.clone(), Options::default()).unwrap();
            fresh.restore(&serde_json::from_str(&json).unwrap()).unwrap();
        })
    });
}

criterion_group!(benches, parsing, scripts, clicks, retries, snapshots);
criterion_main!(benches);
